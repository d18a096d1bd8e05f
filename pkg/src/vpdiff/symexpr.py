"""Hash-consed bitvector terms, path conditions and concrete evaluation.

Every constructor (``mk_*``) returns an interned, locally simplified node, so
two structurally identical terms are the same Python object and equality is
an ``is`` check.  Width 1 doubles as the boolean sort.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Optional, Union

WIDTHS = (1, 8, 16, 32, 64)

BINARY_OPS = ("add", "sub", "mul", "and", "or", "xor", "shl", "lshr")
COMPARE_OPS = ("eq", "ult", "ule")
UNARY_OPS = ("not", "neg")


class TermError(AssertionError):
    """Contract violation while building a term (e.g. mismatched widths)."""


class MissingAssignment(KeyError):
    def __init__(self, var: str):
        super().__init__(var)
        self.var = var

    def __str__(self) -> str:
        return f"no value assigned to {self.var}"


class StateField(NamedTuple):
    field: str
    index: int


class RequestParam(NamedTuple):
    handler: str
    param: str
    index: Optional[int] = None


class DmaFetch(NamedTuple):
    handler: str
    callsite: int
    occurrence: int


VarOrigin = Union[StateField, RequestParam, DmaFetch, None]


def mask(width: int) -> int:
    return (1 << width) - 1


class Term:
    """One interned DAG node.  Never instantiate directly; use ``mk_*``."""

    __slots__ = ("op", "args", "width", "value", "name", "origin", "_vars", "__weakref__")

    def __init__(self, op, args, width, value=None, name=None, origin=None):
        self.op = op
        self.args = args
        self.width = width
        self.value = value
        self.name = name
        self.origin = origin
        self._vars = None

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    @property
    def is_var(self) -> bool:
        return self.op == "var"

    def free_vars(self) -> frozenset:
        """Set of Var terms occurring in this term (cached)."""
        if self._vars is None:
            if self.op == "var":
                self._vars = frozenset((self,))
            elif self.op == "const":
                self._vars = frozenset()
            else:
                acc = set()
                for a in self.args:
                    acc |= a.free_vars()
                self._vars = frozenset(acc)
        return self._vars

    def __repr__(self) -> str:
        return f"<Term {to_str(self)} :u{self.width}>"

    def __str__(self) -> str:
        return to_str(self)

    # interned nodes are immortal singletons; copying must preserve identity
    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    def __reduce__(self):
        raise TypeError("Term objects are interned and cannot be pickled")


_TABLE: dict = {}


def _intern(key, op, args, width, value=None, name=None, origin=None) -> Term:
    t = _TABLE.get(key)
    if t is None:
        # setdefault keeps interning race-free under the GIL
        t = _TABLE.setdefault(key, Term(op, args, width, value, name, origin))
    return t


def table_size() -> int:
    return len(_TABLE)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise TermError(msg)


def _node(op: str, args: tuple, width: int) -> Term:
    return _intern((op, tuple(id(a) for a in args), width), op, args, width)


# ---------------------------------------------------------------- leaves

def mk_const(width: int, value: int) -> Term:
    _check(width in WIDTHS, f"unsupported width {width}")
    v = value & mask(width)
    return _intern(("const", width, v), "const", (), width, value=v)


def mk_true() -> Term:
    return mk_const(1, 1)


def mk_false() -> Term:
    return mk_const(1, 0)


def mk_var(name: str, width: int, origin: VarOrigin = None) -> Term:
    _check(width in WIDTHS, f"unsupported width {width}")
    # width is part of the identity so unrelated models may reuse a name
    return _intern(("var", name, width), "var", (), width, name=name, origin=origin)


# ---------------------------------------------------------------- helpers

def _same_width(a: Term, b: Term, op: str) -> None:
    _check(a.width == b.width, f"{op}: width mismatch {a.width} vs {b.width}")


def _is_zero(t: Term) -> bool:
    return t.op == "const" and t.value == 0


def _is_ones(t: Term) -> bool:
    return t.op == "const" and t.value == mask(t.width)


def _is_one(t: Term) -> bool:
    return t.op == "const" and t.value == 1


def _const_right(a: Term, b: Term):
    if a.op == "const" and b.op != "const":
        return b, a
    return a, b


# ---------------------------------------------------------------- arithmetic

def mk_add(a: Term, b: Term) -> Term:
    _same_width(a, b, "add")
    a, b = _const_right(a, b)
    if a.is_const:
        return mk_const(a.width, a.value + b.value)
    if _is_zero(b):
        return a
    return _node("add", (a, b), a.width)


def mk_sub(a: Term, b: Term) -> Term:
    _same_width(a, b, "sub")
    if a.is_const and b.is_const:
        return mk_const(a.width, a.value - b.value)
    if _is_zero(b):
        return a
    if a is b:
        return mk_const(a.width, 0)
    return _node("sub", (a, b), a.width)


def mk_mul(a: Term, b: Term) -> Term:
    _same_width(a, b, "mul")
    a, b = _const_right(a, b)
    if a.is_const:
        return mk_const(a.width, a.value * b.value)
    if _is_zero(b):
        return b
    if _is_one(b):
        return a
    return _node("mul", (a, b), a.width)


def mk_and(a: Term, b: Term) -> Term:
    _same_width(a, b, "and")
    a, b = _const_right(a, b)
    if a.is_const:
        return mk_const(a.width, a.value & b.value)
    if a is b or _is_ones(b):
        return a
    if _is_zero(b):
        return b
    return _node("and", (a, b), a.width)


def mk_or(a: Term, b: Term) -> Term:
    _same_width(a, b, "or")
    a, b = _const_right(a, b)
    if a.is_const:
        return mk_const(a.width, a.value | b.value)
    if a is b or _is_zero(b):
        return a
    if _is_ones(b):
        return b
    return _node("or", (a, b), a.width)


def mk_xor(a: Term, b: Term) -> Term:
    _same_width(a, b, "xor")
    a, b = _const_right(a, b)
    if a.is_const:
        return mk_const(a.width, a.value ^ b.value)
    if a is b:
        return mk_const(a.width, 0)
    if _is_zero(b):
        return a
    if _is_ones(b):
        return mk_not(a)
    return _node("xor", (a, b), a.width)


def mk_shl(a: Term, b: Term) -> Term:
    _same_width(a, b, "shl")
    if b.is_const:
        if b.value >= a.width:
            return mk_const(a.width, 0)
        if b.value == 0:
            return a
        if a.is_const:
            return mk_const(a.width, a.value << b.value)
    if _is_zero(a):
        return a
    return _node("shl", (a, b), a.width)


def mk_lshr(a: Term, b: Term) -> Term:
    _same_width(a, b, "lshr")
    if b.is_const:
        if b.value >= a.width:
            return mk_const(a.width, 0)
        if b.value == 0:
            return a
        if a.is_const:
            return mk_const(a.width, a.value >> b.value)
    if _is_zero(a):
        return a
    return _node("lshr", (a, b), a.width)


def mk_not(a: Term) -> Term:
    if a.is_const:
        return mk_const(a.width, ~a.value)
    if a.op == "not":
        return a.args[0]
    return _node("not", (a,), a.width)


def mk_neg(a: Term) -> Term:
    if a.is_const:
        return mk_const(a.width, -a.value)
    if a.op == "neg":
        return a.args[0]
    return _node("neg", (a,), a.width)


# ---------------------------------------------------------------- predicates

def mk_eq(a: Term, b: Term) -> Term:
    _same_width(a, b, "eq")
    if a is b:
        return mk_true()
    a, b = _const_right(a, b)
    if a.is_const:
        return mk_const(1, int(a.value == b.value))
    if a.width == 1 and b.is_const:
        return a if b.value == 1 else mk_not(a)
    return _node("eq", (a, b), 1)


def mk_ne(a: Term, b: Term) -> Term:
    return mk_not(mk_eq(a, b))


def upper_bound(t: Term, depth: int = 8) -> int:
    """A cheap, sound upper bound on the unsigned value of ``t``."""
    if t.op == "const":
        return t.value
    if depth == 0:
        return mask(t.width)
    if t.op == "and":
        return min(upper_bound(t.args[0], depth - 1), upper_bound(t.args[1], depth - 1))
    if t.op in ("or", "xor"):
        hi = max(upper_bound(t.args[0], depth - 1), upper_bound(t.args[1], depth - 1))
        return (1 << hi.bit_length()) - 1
    if t.op == "zext":
        return upper_bound(t.args[0], depth - 1)
    if t.op == "trunc":
        return min(upper_bound(t.args[0], depth - 1), mask(t.width))
    if t.op == "lshr" and t.args[1].is_const:
        return upper_bound(t.args[0], depth - 1) >> t.args[1].value
    if t.op == "ite":
        return max(upper_bound(t.args[1], depth - 1), upper_bound(t.args[2], depth - 1))
    return mask(t.width)


def mk_ult(a: Term, b: Term) -> Term:
    _same_width(a, b, "ult")
    if a.is_const and b.is_const:
        return mk_const(1, int(a.value < b.value))
    if a is b or _is_zero(b):
        return mk_false()
    # a masked index against the array size, e.g. (x & 3) < 4
    if b.is_const and upper_bound(a) < b.value:
        return mk_true()
    return _node("ult", (a, b), 1)


def mk_ule(a: Term, b: Term) -> Term:
    _same_width(a, b, "ule")
    if a.is_const and b.is_const:
        return mk_const(1, int(a.value <= b.value))
    if a is b or _is_zero(a) or _is_ones(b):
        return mk_true()
    if b.is_const and upper_bound(a) <= b.value:
        return mk_true()
    return _node("ule", (a, b), 1)


# ---------------------------------------------------------------- width changes

def mk_zext(a: Term, width: int) -> Term:
    _check(width in WIDTHS and width >= a.width, f"zext from {a.width} to {width}")
    if width == a.width:
        return a
    if a.is_const:
        return mk_const(width, a.value)
    if a.op == "zext":
        return mk_zext(a.args[0], width)
    return _node("zext", (a,), width)


def mk_trunc(a: Term, width: int) -> Term:
    _check(width in WIDTHS and width <= a.width, f"trunc from {a.width} to {width}")
    if width == a.width:
        return a
    if a.is_const:
        return mk_const(width, a.value)
    if a.op == "trunc":
        return mk_trunc(a.args[0], width)
    if a.op == "zext":
        inner = a.args[0]
        if width >= inner.width:
            return mk_zext(inner, width)
        return mk_trunc(inner, width)
    return _node("trunc", (a,), width)


def mk_ite(c: Term, a: Term, b: Term) -> Term:
    _check(c.width == 1, f"ite condition has width {c.width}")
    _same_width(a, b, "ite")
    if c.is_const:
        return a if c.value else b
    if a is b:
        return a
    if a.width == 1 and a.is_const and b.is_const:
        return c if a.value == 1 else mk_not(c)
    return _node("ite", (c, a, b), a.width)


_BINARY = {
    "add": mk_add, "sub": mk_sub, "mul": mk_mul, "and": mk_and, "or": mk_or,
    "xor": mk_xor, "shl": mk_shl, "lshr": mk_lshr,
    "eq": mk_eq, "ult": mk_ult, "ule": mk_ule,
}


def mk_binary(op: str, a: Term, b: Term) -> Term:
    return _BINARY[op](a, b)


def mk_unary(op: str, a: Term) -> Term:
    return mk_not(a) if op == "not" else mk_neg(a)


def rebuild(t: Term, args: tuple) -> Term:
    """Reconstruct a node of ``t``'s kind over new children (re-simplifying)."""
    op = t.op
    if op in _BINARY:
        return _BINARY[op](*args)
    if op == "not":
        return mk_not(args[0])
    if op == "neg":
        return mk_neg(args[0])
    if op == "zext":
        return mk_zext(args[0], t.width)
    if op == "trunc":
        return mk_trunc(args[0], t.width)
    if op == "ite":
        return mk_ite(*args)
    return t


def substitute(t: Term, binding: Mapping[Term, Term], memo: Optional[dict] = None) -> Term:
    """Replace variables per ``binding`` and re-simplify bottom-up."""
    if memo is None:
        memo = {}
    stack = [t]
    while stack:
        node = stack[-1]
        if node in memo:
            stack.pop()
            continue
        if node.op == "var":
            memo[node] = binding.get(node, node)
            stack.pop()
            continue
        if node.op == "const" or not (node.free_vars() & binding.keys()):
            memo[node] = node
            stack.pop()
            continue
        pending = [a for a in node.args if a not in memo]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        memo[node] = rebuild(node, tuple(memo[a] for a in node.args))
    return memo[t]


# ---------------------------------------------------------------- evaluation

def apply_op(op: str, width: int, vals: tuple) -> int:
    """Reference semantics of one operator over already-evaluated operands."""
    m = mask(width)
    if op == "add":
        return (vals[0] + vals[1]) & m
    if op == "sub":
        return (vals[0] - vals[1]) & m
    if op == "mul":
        return (vals[0] * vals[1]) & m
    if op == "and":
        return vals[0] & vals[1]
    if op == "or":
        return vals[0] | vals[1]
    if op == "xor":
        return vals[0] ^ vals[1]
    if op == "shl":
        return 0 if vals[1] >= width else (vals[0] << vals[1]) & m
    if op == "lshr":
        return 0 if vals[1] >= width else vals[0] >> vals[1]
    if op == "not":
        return ~vals[0] & m
    if op == "neg":
        return -vals[0] & m
    if op == "eq":
        return int(vals[0] == vals[1])
    if op == "ult":
        return int(vals[0] < vals[1])
    if op == "ule":
        return int(vals[0] <= vals[1])
    if op == "zext":
        return vals[0]
    if op == "trunc":
        return vals[0] & m
    if op == "ite":
        return vals[1] if vals[0] else vals[2]
    raise TermError(f"unknown operator {op}")


def eval_term(t: Term, assignment: Mapping[str, int], memo: Optional[dict] = None) -> int:
    """Evaluate ``t`` under a total assignment of variable names to integers."""
    if memo is None:
        memo = {}
    stack = [t]
    while stack:
        node = stack[-1]
        if node in memo:
            stack.pop()
            continue
        if node.op == "const":
            memo[node] = node.value
            stack.pop()
            continue
        if node.op == "var":
            try:
                memo[node] = assignment[node.name] & mask(node.width)
            except KeyError:
                raise MissingAssignment(node.name) from None
            stack.pop()
            continue
        pending = [a for a in node.args if a not in memo]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        memo[node] = apply_op(node.op, node.width, tuple(memo[a] for a in node.args))
    return memo[t]


# ---------------------------------------------------------------- printing

_INFIX = {"add": "+", "sub": "-", "mul": "*", "and": "&", "or": "|", "xor": "^",
          "shl": "<<", "lshr": ">>", "eq": "==", "ult": "<", "ule": "<="}


def to_str(t: Term) -> str:
    """Human-readable rendering in DSL-like syntax (fully parenthesised)."""
    op = t.op
    if op == "const":
        if t.width == 1:
            return "true" if t.value else "false"
        return str(t.value) if t.value < 10 else hex(t.value)
    if op == "var":
        return t.name
    if op in _INFIX:
        a, b = t.args
        return f"({to_str(a)} {_INFIX[op]} {to_str(b)})"
    if op == "not":
        inner = t.args[0]
        if t.width == 1 and inner.op == "eq":
            return f"({to_str(inner.args[0])} != {to_str(inner.args[1])})"
        return f"~{to_str(inner)}"
    if op == "neg":
        return f"-{to_str(t.args[0])}"
    if op in ("zext", "trunc"):
        return f"{op}<{t.width}>({to_str(t.args[0])})"
    if op == "ite":
        return "ite({}, {}, {})".format(*(to_str(a) for a in t.args))
    return f"<{op}>"


# ---------------------------------------------------------------- path conditions

@dataclass(frozen=True)
class PathCondition:
    """Ordered, duplicate-free conjunction of width-1 terms.

    The canonical FALSE has ``is_false`` set and no conjuncts; TRUE is the
    empty conjunction.
    """

    conjuncts: tuple = ()
    is_false: bool = False

    def __iter__(self):
        return iter(self.conjuncts)

    def __len__(self) -> int:
        return len(self.conjuncts)

    def __contains__(self, t) -> bool:
        return t in self.conjuncts

    @property
    def is_true(self) -> bool:
        return not self.is_false and not self.conjuncts

    def free_vars(self) -> frozenset:
        acc = set()
        for c in self.conjuncts:
            acc |= c.free_vars()
        return frozenset(acc)

    def holds(self, assignment: Mapping[str, int]) -> bool:
        if self.is_false:
            return False
        memo: dict = {}
        return all(eval_term(c, assignment, memo) == 1 for c in self.conjuncts)

    def __str__(self) -> str:
        if self.is_false:
            return "false"
        if not self.conjuncts:
            return "true"
        return " && ".join(to_str(c) for c in self.conjuncts)


TRUE = PathCondition()
FALSE = PathCondition((), True)


def pc_and(pc: PathCondition, c: Term) -> PathCondition:
    """Conjoin ``c``; splits width-1 ANDs, dedups, and detects ``x && ~x``."""
    _check(c.width == 1, f"path condition conjunct has width {c.width}")
    if pc.is_false:
        return pc
    if c.op == "and":
        return pc_and(pc_and(pc, c.args[0]), c.args[1])
    if c.is_const:
        return pc if c.value else FALSE
    if c in pc.conjuncts:
        return pc
    if mk_not(c) in pc.conjuncts:
        return FALSE
    return PathCondition(pc.conjuncts + (c,))


def pc_from(terms: Iterable[Term]) -> PathCondition:
    pc = TRUE
    for t in terms:
        pc = pc_and(pc, t)
    return pc


def pc_conj(a: PathCondition, b: PathCondition) -> PathCondition:
    if a.is_false or b.is_false:
        return FALSE
    for c in b.conjuncts:
        a = pc_and(a, c)
    return a
