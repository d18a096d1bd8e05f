"""Plain concrete execution of one handler invocation.

This is the brute-force reference the symbolic engine is checked against,
so it deliberately shares nothing with it beyond the AST, the width table
and :func:`symexpr.apply_op` (the operator reference semantics).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..frontend.ast import (
    Assign, Binary, BoundMarker, Cast, Const, DmaRead, If, Index, Intrinsic, Ite, Name,
    Return, Unary, While,
)
from ..frontend.loops import DEFAULT_LOOP_BOUND, elide_loops
from ..frontend.validate import ValidatedModel
from ..symexpr import MissingAssignment, apply_op, mask
from .naming import state_var_name
from .symbolic import BOUND_EXHAUSTED, COMPLETE, ERROR

_INTRINSIC_KIND = {"fire_interrupt": "interrupt", "send_output": "output", "dma_write": "dma_write"}


@dataclass(frozen=True)
class ConcreteOutcome:
    state: Mapping[Tuple[str, int], int]
    return_value: Optional[int]
    effects: Tuple[tuple, ...]
    status: str = COMPLETE
    detail: str = ""


class _OutOfRange(Exception):
    pass


class _Stop(Exception):
    def __init__(self, status, ret=None, detail=""):
        self.status = status
        self.ret = ret
        self.detail = detail


class _Machine:
    def __init__(self, m: ValidatedModel, handler, state, args, dma_oracle):
        self.m = m
        self.h = handler
        self.state = state
        self.args = args
        self.dma = dma_oracle
        self.arrays = {f.name: f.count for f in m.state_fields if f.length is not None}
        self.locals = {n: 0 for n in m.locals[handler.name]}
        self.effects: List[tuple] = []
        self.occ: Dict[int, int] = {}

    def ev(self, e, pending: list) -> int:
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Name):
            ident = e.ident
            if (ident, 0) in self.state and ident not in self.arrays:
                return self.state[(ident, 0)]
            if ident in self.args:
                return self.args[ident]
            return self.locals[ident]
        if isinstance(e, Index):
            i = self.ev(e.index, pending)
            if e.ident in self.arrays:
                if i >= self.arrays[e.ident]:
                    raise _OutOfRange(f"{e.ident}[{i}]")
                return self.state[(e.ident, i)]
            arr = self.args[e.ident]
            if i >= len(arr):
                raise _OutOfRange(f"{e.ident}[{i}]")
            return arr[i]
        if isinstance(e, Unary):
            return apply_op(e.op, self.m.width(e), (self.ev(e.arg, pending),))
        if isinstance(e, Binary):
            a = self.ev(e.lhs, pending)
            b = self.ev(e.rhs, pending)
            if e.op == "ne":
                return int(a != b)
            return apply_op(e.op, self.m.width(e), (a, b))
        if isinstance(e, Cast):
            v = self.ev(e.arg, pending)
            return v if e.op == "zext" else v & mask(e.width)
        if isinstance(e, Ite):
            c = self.ev(e.cond, pending)
            a = self.ev(e.then, pending)
            b = self.ev(e.other, pending)
            return a if c else b
        if isinstance(e, DmaRead):
            return self.fetch(e.callsite, self.ev(e.addr, pending), pending)
        raise TypeError(f"not an expression: {e!r}")

    def fetch(self, callsite: int, addr: int, pending: list) -> int:
        k = self.occ.get(callsite, 0)
        self.occ[callsite] = k + 1
        value = self.dma.get((callsite, k), 0) & mask(64)
        pending.append(("dma_read", addr, value))
        return value

    def block(self, stmts) -> None:
        for s in stmts:
            self.stmt(s)

    def stmt(self, s) -> None:
        pending: list = []
        try:
            if isinstance(s, Assign):
                t = s.target
                if isinstance(t, Index):
                    i = self.ev(t.index, pending)
                    v = self.ev(s.value, pending)
                    if i >= self.arrays[t.ident]:
                        raise _OutOfRange(f"{t.ident}[{i}]")
                    self.effects.extend(pending)
                    self.state[(t.ident, i)] = v
                    return
                v = self.ev(s.value, pending)
                self.effects.extend(pending)
                if (t.ident, 0) in self.state and t.ident not in self.arrays:
                    self.state[(t.ident, 0)] = v
                else:
                    self.locals[t.ident] = v
                return
            if isinstance(s, If):
                c = self.ev(s.cond, pending)
                self.effects.extend(pending)
                self.block(s.then if c else s.other)
                return
            if isinstance(s, Intrinsic):
                if s.name == "dma_read":
                    self.fetch(s.callsite, self.ev(s.args[0], pending), pending)
                    self.effects.extend(pending)
                    return
                vals = tuple(self.ev(a, pending) for a in s.args)
                self.effects.extend(pending)
                self.effects.append((_INTRINSIC_KIND[s.name],) + vals)
                return
            if isinstance(s, Return):
                v = self.ev(s.value, pending)
                self.effects.extend(pending)
                raise _Stop(COMPLETE, v)
            if isinstance(s, BoundMarker):
                c = self.ev(s.cond, pending)
                self.effects.extend(pending)
                if c:
                    raise _Stop(BOUND_EXHAUSTED, detail=f"loop {s.loop_id} exceeded bound {s.bound}")
                return
            if isinstance(s, While):
                raise AssertionError("loops must be removed before execution")
        except _OutOfRange as exc:
            raise _Stop(ERROR, detail=f"index out of range: {exc}") from None
        raise TypeError(f"not a statement: {s!r}")


def run_concrete(m: ValidatedModel, h: str, concrete_state: Mapping[str, int],
                 concrete_args: Sequence, dma_oracle: Optional[Mapping] = None,
                 loop_bound: int = DEFAULT_LOOP_BOUND) -> ConcreteOutcome:
    """Run handler ``h`` on concrete inputs.

    ``concrete_state`` maps state variable names (``state.<field>.<i>``) to
    values and must be total.  ``dma_oracle`` maps ``(callsite, occurrence)``
    to the value a ``dma_read`` returns; missing entries read as 0.
    """
    m = elide_loops(m, loop_bound)
    handler = m.handler(h)
    if handler is None:
        raise KeyError(f"model {m.name} has no handler {h}")
    state = {}
    for f in m.state_fields:
        for i in range(f.count):
            name = state_var_name(f.name, i)
            if name not in concrete_state:
                raise MissingAssignment(name)
            state[(f.name, i)] = concrete_state[name] & mask(f.width)
    if len(concrete_args) != len(handler.params):
        raise ValueError(f"{h} takes {len(handler.params)} arguments, got {len(concrete_args)}")
    args = {}
    for p, a in zip(handler.params, concrete_args):
        if p.length is None:
            args[p.name] = a & mask(p.width)
        else:
            if len(a) != p.length:
                raise ValueError(f"{h}.{p.name} needs {p.length} elements")
            args[p.name] = tuple(x & mask(p.width) for x in a)
    machine = _Machine(m, handler, state, args, dma_oracle or {})
    status, ret, detail = COMPLETE, None, ""
    try:
        machine.block(handler.body)
    except _Stop as stop:
        status, ret, detail = stop.status, stop.ret, stop.detail
    return ConcreteOutcome(dict(machine.state), ret, tuple(machine.effects), status, detail)
