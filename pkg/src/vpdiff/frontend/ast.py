"""AST for device-model source files.

Nodes are frozen dataclasses.  Source positions are kept on every node but
excluded from equality, so a pretty-printed and reparsed model compares
equal to the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

HANDLER_KINDS = ("mmio_read", "mmio_write", "env_input")
LOOP_ATTRS = ("default", "elide", "unroll")


@dataclass(frozen=True)
class Pos:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NOPOS = Pos(0, 0)


def _pos():
    return field(default=NOPOS, compare=False, repr=False)


# ---------------------------------------------------------------- expressions

@dataclass(frozen=True)
class Const:
    value: int
    pos: Pos = _pos()


@dataclass(frozen=True)
class Name:
    ident: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Index:
    ident: str
    index: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Unary:
    op: str  # "not" | "neg"
    arg: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Binary:
    # add sub mul and or xor shl lshr eq ne ult ule
    op: str
    lhs: "Expr"
    rhs: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Cast:
    op: str  # "zext" | "trunc"
    width: int
    arg: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Ite:
    cond: "Expr"
    then: "Expr"
    other: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class DmaRead:
    addr: "Expr"
    # preorder position of this call among the handler's dma_read calls
    callsite: int
    pos: Pos = _pos()


Expr = Union[Const, Name, Index, Unary, Binary, Cast, Ite, DmaRead]

# ---------------------------------------------------------------- statements


@dataclass(frozen=True)
class Assign:
    target: Union[Name, Index]
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: Tuple["Stmt", ...]
    other: Tuple["Stmt", ...] = ()
    pos: Pos = _pos()


@dataclass(frozen=True)
class While:
    cond: Expr
    body: Tuple["Stmt", ...]
    attr: str = "default"
    unroll: Optional[int] = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class Intrinsic:
    # fire_interrupt(line) | dma_write(addr, value) | send_output(value) | dma_read(addr)
    name: str
    args: Tuple[Expr, ...]
    callsite: int = -1  # only for statement-form dma_read
    pos: Pos = _pos()


@dataclass(frozen=True)
class Return:
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class BoundMarker:
    """Left behind by loop unrolling: the path ends BOUND_EXHAUSTED if ``cond`` can hold."""

    cond: Expr
    loop_id: int
    bound: int
    pos: Pos = _pos()


Stmt = Union[Assign, If, While, Intrinsic, Return, BoundMarker]
Block = Tuple[Stmt, ...]

# ---------------------------------------------------------------- declarations


@dataclass(frozen=True)
class FieldDecl:
    name: str
    width: int
    length: Optional[int] = None  # None for scalars
    pos: Pos = _pos()

    @property
    def count(self) -> int:
        return 1 if self.length is None else self.length


@dataclass(frozen=True)
class Param:
    name: str
    width: int
    length: Optional[int] = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class Handler:
    name: str
    kind: str
    params: Tuple[Param, ...]
    return_width: Optional[int]
    body: Block
    pos: Pos = _pos()

    def param(self, name: str) -> Optional[Param]:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class DeviceModel:
    name: str
    state_fields: Tuple[FieldDecl, ...]
    handlers: Tuple[Handler, ...]
    version_tag: str = ""
    pos: Pos = _pos()

    def field(self, name: str) -> Optional[FieldDecl]:
        for f in self.state_fields:
            if f.name == name:
                return f
        return None

    def handler(self, name: str) -> Optional[Handler]:
        for h in self.handlers:
            if h.name == name:
                return h
        return None


# ---------------------------------------------------------------- traversal helpers

def iter_exprs(e: Expr):
    """Preorder over an expression tree."""
    yield e
    if isinstance(e, Index):
        yield from iter_exprs(e.index)
    elif isinstance(e, Unary):
        yield from iter_exprs(e.arg)
    elif isinstance(e, Binary):
        yield from iter_exprs(e.lhs)
        yield from iter_exprs(e.rhs)
    elif isinstance(e, Cast):
        yield from iter_exprs(e.arg)
    elif isinstance(e, Ite):
        yield from iter_exprs(e.cond)
        yield from iter_exprs(e.then)
        yield from iter_exprs(e.other)
    elif isinstance(e, DmaRead):
        yield from iter_exprs(e.addr)


def stmt_exprs(s: Stmt):
    """Top-level expressions of one statement (not of nested blocks)."""
    if isinstance(s, Assign):
        if isinstance(s.target, Index):
            return (s.target.index, s.value)
        return (s.value,)
    if isinstance(s, (If, While, BoundMarker)):
        return (s.cond,)
    if isinstance(s, Intrinsic):
        return s.args
    if isinstance(s, Return):
        return (s.value,)
    return ()


def iter_stmts(block: Block):
    """Preorder over all statements, descending into nested blocks."""
    for s in block:
        yield s
        if isinstance(s, If):
            yield from iter_stmts(s.then)
            yield from iter_stmts(s.other)
        elif isinstance(s, While):
            yield from iter_stmts(s.body)


def mentioned_names(block: Block) -> set:
    """Every identifier read or written anywhere in ``block``."""
    names = set()
    for s in iter_stmts(block):
        if isinstance(s, Assign):
            names.add(s.target.ident)
        for top in stmt_exprs(s):
            for e in iter_exprs(top):
                if isinstance(e, (Name, Index)):
                    names.add(e.ident)
    return names


def has_dma_read(block: Block) -> bool:
    for s in iter_stmts(block):
        if isinstance(s, Intrinsic) and s.name == "dma_read":
            return True
        for top in stmt_exprs(s):
            if any(isinstance(e, DmaRead) for e in iter_exprs(top)):
                return True
    return False


def read_names(block: Block) -> set:
    """Identifiers whose current value some expression in ``block`` reads."""
    names = set()
    for s in iter_stmts(block):
        for top in stmt_exprs(s):
            for e in iter_exprs(top):
                if isinstance(e, (Name, Index)):
                    names.add(e.ident)
    return names
