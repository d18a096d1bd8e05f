"""Name resolution and width checking.

Integer literals carry no width of their own; they take the width their
context demands (the other operand, the assignment target, the condition).
The checked widths of every expression node are recorded in
``ValidatedModel.widths`` keyed by node identity, which both interpreters use.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Optional

from .ast import (
    Assign, Binary, BoundMarker, Cast, Const, DeviceModel, DmaRead, FieldDecl, Handler,
    If, Index, Intrinsic, Ite, Name, Return, Unary, While,
)
from .errors import ValidationError

_ARITH = {"add", "sub", "mul", "and", "or", "xor", "shl", "lshr"}
_CMP = {"eq", "ne", "ult", "ule"}

# widths given to bare literals where no operand fixes one
LITERAL_DEFAULTS = {"fire_interrupt": (8,), "send_output": (8,), "dma_write": (64, 64),
                    "dma_read": (64,), "index": 32}


@dataclass(frozen=True)
class ValidatedModel:
    model: DeviceModel
    widths: Mapping[int, int]
    locals: Mapping[str, Mapping[str, int]]

    @property
    def name(self) -> str:
        return self.model.name

    @property
    def version_tag(self) -> str:
        return self.model.version_tag

    @property
    def state_fields(self):
        return self.model.state_fields

    @property
    def handlers(self):
        return self.model.handlers

    def handler(self, name: str) -> Optional[Handler]:
        return self.model.handler(name)

    def field(self, name: str) -> Optional[FieldDecl]:
        return self.model.field(name)

    def width(self, expr) -> int:
        return self.widths[id(expr)]

    def __eq__(self, other):
        if not isinstance(other, ValidatedModel):
            return NotImplemented
        return self.model == other.model

    def __hash__(self):
        return hash(self.model)


class _HandlerChecker:
    def __init__(self, model: DeviceModel, handler: Handler, widths: dict):
        self.model = model
        self.h = handler
        self.widths = widths
        self.fields = {f.name: f for f in model.state_fields}
        self.params = {p.name: p for p in handler.params}
        self.locals: dict = {}

    def fail(self, msg, node, rule):
        raise ValidationError(f"handler {self.h.name}: {msg}", node, rule)

    # -------------------------------------------------------------- signatures

    def check_signature(self) -> None:
        h = self.h
        names = [p.name for p in h.params]
        scalar = all(p.length is None for p in h.params)
        if h.kind == "mmio_read":
            ok = names == ["offset"] and scalar and h.return_width is not None
        elif h.kind == "mmio_write":
            ok = names == ["offset", "value"] and scalar and h.return_width is None
        elif h.kind == "env_input":
            ok = (names == ["data", "len"] and h.params[0].length is not None
                  and h.params[0].width == 8 and h.params[1].length is None
                  and h.params[1].width == 8 and h.return_width is None)
        else:
            ok = False
        if not ok:
            self.fail(
                "bad handler signature: expected (offset) -> uN for mmio_read, "
                "(offset, value) for mmio_write or (data: u8[N], len: u8) for env_input",
                h, "signature",
            )
        for p in h.params:
            if p.name in self.fields:
                self.fail(f"parameter {p.name} shadows a state field", p, "shadowing")

    # -------------------------------------------------------------- expressions

    def lookup_scalar(self, ident: str, node) -> int:
        if ident in self.fields:
            f = self.fields[ident]
            if f.length is not None:
                self.fail(f"array field {ident} used without an index", node, "array")
            return f.width
        if ident in self.params:
            p = self.params[ident]
            if p.length is not None:
                self.fail(f"array parameter {ident} used without an index", node, "array")
            return p.width
        if ident in self.locals:
            return self.locals[ident]
        self.fail(f"unresolved identifier {ident}", node, "resolve")

    def lookup_array(self, ident: str, node):
        decl = self.fields.get(ident) or self.params.get(ident)
        if decl is None:
            if ident in self.locals:
                self.fail(f"{ident} is not an array", node, "array")
            self.fail(f"unresolved identifier {ident}", node, "resolve")
        if decl.length is None:
            self.fail(f"{ident} is not an array", node, "array")
        return decl

    def natural(self, e) -> Optional[int]:
        """Width implied by ``e`` alone, or None if it is literal-only."""
        if isinstance(e, Const):
            return None
        if isinstance(e, Name):
            return self.lookup_scalar(e.ident, e)
        if isinstance(e, Index):
            return self.lookup_array(e.ident, e).width
        if isinstance(e, Unary):
            return self.natural(e.arg)
        if isinstance(e, Binary):
            if e.op in _CMP:
                return 1
            w = self.natural(e.lhs)
            return w if w is not None else self.natural(e.rhs)
        if isinstance(e, Cast):
            return e.width
        if isinstance(e, Ite):
            w = self.natural(e.then)
            return w if w is not None else self.natural(e.other)
        if isinstance(e, DmaRead):
            return 64
        raise TypeError(f"not an expression: {e!r}")

    def check(self, e, expected: Optional[int]) -> int:
        w = self.natural(e)
        if w is None:
            w = expected
        if w is None:
            self.fail("cannot infer the width of a literal-only expression", e, "width")
        if expected is not None and w != expected:
            self.fail(f"width mismatch: expression has width {w}, context needs {expected}", e, "width")
        if isinstance(e, Const):
            if e.value >= 1 << w:
                self.fail(f"width mismatch: literal {e.value} does not fit in u{w}", e, "width")
        elif isinstance(e, Index):
            self.check_index(e)
        elif isinstance(e, Unary):
            self.check(e.arg, w)
        elif isinstance(e, Binary):
            if e.op in _CMP:
                ow = self.natural(e.lhs)
                if ow is None:
                    ow = self.natural(e.rhs)
                if ow is None:
                    self.fail("cannot infer the width of a literal-only comparison", e, "width")
                self.check(e.lhs, ow)
                self.check(e.rhs, ow)
            else:
                self.check(e.lhs, w)
                self.check(e.rhs, w)
        elif isinstance(e, Cast):
            inner = self.natural(e.arg)
            if inner is None:
                # a cast around a bare literal just types the literal
                inner = e.width
            if e.op == "zext" and inner > e.width:
                self.fail(f"width mismatch: zext<{e.width}> of a u{inner} value", e, "width")
            if e.op == "trunc" and inner < e.width:
                self.fail(f"width mismatch: trunc<{e.width}> of a u{inner} value", e, "width")
            self.check(e.arg, inner)
        elif isinstance(e, Ite):
            self.check(e.cond, 1)
            self.check(e.then, w)
            self.check(e.other, w)
        elif isinstance(e, DmaRead):
            self.check_default(e.addr, LITERAL_DEFAULTS["dma_read"][0])
        self.widths[id(e)] = w
        return w

    def check_default(self, e, default: int) -> int:
        w = self.natural(e)
        return self.check(e, default if w is None else w)

    def check_index(self, node: Index) -> None:
        self.lookup_array(node.ident, node)
        self.check_default(node.index, LITERAL_DEFAULTS["index"])

    # -------------------------------------------------------------- statements

    def block(self, stmts) -> None:
        for s in stmts:
            self.stmt(s)

    def stmt(self, s) -> None:
        if isinstance(s, Assign):
            t = s.target
            if t.ident in self.params:
                self.fail(f"cannot assign to parameter {t.ident}", s, "assign")
            if isinstance(t, Index):
                decl = self.lookup_array(t.ident, t)
                self.check_index(t)
                self.check(s.value, decl.width)
                self.widths[id(t)] = decl.width
            elif t.ident in self.fields or t.ident in self.locals:
                w = self.lookup_scalar(t.ident, t)
                self.check(s.value, w)
                self.widths[id(t)] = w
            else:
                w = self.natural(s.value)
                if w is None:
                    self.fail(f"cannot infer the width of new local {t.ident} from a literal", s, "width")
                self.check(s.value, w)
                self.locals[t.ident] = w
                self.widths[id(t)] = w
        elif isinstance(s, If):
            self.check(s.cond, 1)
            self.block(s.then)
            self.block(s.other)
        elif isinstance(s, While):
            self.check(s.cond, 1)
            self.block(s.body)
        elif isinstance(s, BoundMarker):
            self.check(s.cond, 1)
        elif isinstance(s, Intrinsic):
            for arg, default in zip(s.args, LITERAL_DEFAULTS[s.name]):
                self.check_default(arg, default)
        elif isinstance(s, Return):
            if self.h.kind != "mmio_read":
                self.fail("return outside mmio_read", s, "return")
            self.check(s.value, self.h.return_width)
        else:
            raise TypeError(f"not a statement: {s!r}")

    def run(self) -> None:
        self.check_signature()
        self.block(self.h.body)
        if self.h.kind == "mmio_read" and not _always_returns(self.h.body):
            self.fail("missing return on some path of mmio_read", self.h, "return")


def _always_returns(stmts) -> bool:
    for s in stmts:
        if isinstance(s, Return):
            return True
        if isinstance(s, If) and _always_returns(s.then) and _always_returns(s.other):
            return True
    return False


def validate_model(m) -> ValidatedModel:
    """Resolve names and check widths; returns an immutable ValidatedModel."""
    if isinstance(m, ValidatedModel):
        m = m.model
    seen = set()
    for f in m.state_fields:
        if f.name in seen:
            raise ValidationError(f"duplicate field {f.name}", f, "unique")
        seen.add(f.name)
    seen = set()
    for h in m.handlers:
        if h.name in seen:
            raise ValidationError(f"duplicate handler {h.name}", h, "unique")
        seen.add(h.name)
    widths: dict = {}
    locals_: dict = {}
    for h in m.handlers:
        checker = _HandlerChecker(m, h, widths)
        checker.run()
        locals_[h.name] = MappingProxyType(dict(checker.locals))
    return ValidatedModel(m, MappingProxyType(widths), MappingProxyType(locals_))
