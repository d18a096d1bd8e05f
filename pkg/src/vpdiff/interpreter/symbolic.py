"""Symbolic execution of model handlers.

Exploration is depth-first with the then-branch first, so path ids are a
pure function of the model, the arguments and the budget.  Each statement
executes atomically: all array bounds it touches are checked before any of
its effects happen, and a possibly out-of-range access forks off an error
path.  ``ite`` evaluates all three operands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Collection, Dict, List, Mapping, Optional, Sequence, Tuple

from .. import symexpr as sx
from ..frontend.ast import (
    Assign, Binary, BoundMarker, Cast, Const, DmaRead, If, Index, Intrinsic, Ite, Name,
    Return, Unary, While,
)
from ..frontend.loops import DEFAULT_LOOP_BOUND, elide_loops
from ..frontend.validate import ValidatedModel
from ..solver import SolverConfig, Unknown, Unsat, solve
from ..symexpr import PathCondition, Term
from .naming import dma_var, state_var

COMPLETE = "COMPLETE"
BOUND_EXHAUSTED = "BOUND_EXHAUSTED"
ERROR = "ERROR"


@dataclass(frozen=True)
class ExploreBudget:
    max_paths: int = 10000
    max_steps_per_path: int = 100000
    default_loop_bound: int = DEFAULT_LOOP_BOUND

    def __post_init__(self):
        for name in ("max_paths", "max_steps_per_path", "default_loop_bound"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass
class SymbolicEnv:
    state: Dict[Tuple[str, int], Term]
    locals: Dict[str, Term] = field(default_factory=dict)

    def copy(self) -> "SymbolicEnv":
        return SymbolicEnv(dict(self.state), dict(self.locals))


@dataclass(frozen=True)
class EffectEvent:
    kind: str  # interrupt | dma_read | dma_write | output
    args: Tuple[Term, ...]
    sequence_index: int

    def __str__(self) -> str:
        return f"{self.kind}(" + ", ".join(sx.to_str(a) for a in self.args) + ")"


@dataclass(frozen=True)
class PathSummary:
    path_id: int
    handler: str
    pc: PathCondition
    final_state: Mapping[Tuple[str, int], Term]
    return_term: Optional[Term]
    effects: Tuple[EffectEvent, ...]
    status: str = COMPLETE
    unknown: bool = False
    detail: str = ""


@dataclass
class Exploration:
    """Summaries in exploration order plus a truncation flag."""

    paths: List[PathSummary]
    truncated: bool = False
    reason: str = ""

    def __iter__(self):
        return iter(self.paths)

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, i):
        return self.paths[i]


def init_env(m: ValidatedModel, private: Collection[str] = (), version: str = "") -> SymbolicEnv:
    """Bind every state element to its shared Var.

    Fields named in ``private`` get Vars tagged with ``version`` instead, for
    fields whose shape differs between the two versions being compared.
    """
    state = {}
    for f in m.state_fields:
        tag = version if f.name in private else ""
        for i in range(f.count):
            state[(f.name, i)] = state_var(f.name, i, f.width, tag)
    return SymbolicEnv(state)


def ensure_loop_free(m: ValidatedModel, bound: int) -> ValidatedModel:
    return elide_loops(m, bound)


class _Path:
    __slots__ = ("env", "pc", "effects", "steps", "occ", "unknown", "frames")

    def __init__(self, env, pc, effects, steps, occ, unknown, frames):
        self.env = env
        self.pc = pc
        self.effects = effects
        self.steps = steps
        self.occ = occ
        self.unknown = unknown
        self.frames = frames

    def fork(self) -> "_Path":
        return _Path(self.env.copy(), self.pc, list(self.effects), self.steps, dict(self.occ),
                     self.unknown, list(self.frames))


class _Explorer:
    def __init__(self, m, handler, budget, solver, guide):
        self.m = m
        self.h = handler
        self.budget = budget
        self.solver = solver
        self.guide = guide
        self.fields = {f.name: f for f in m.state_fields}
        self.params = {p.name: p for p in handler.params}
        self.summaries: List[PathSummary] = []
        self.truncated = False
        self.reason = ""

    # -------------------------------------------------------------- feasibility

    def query(self, pc: PathCondition):
        full = sx.pc_conj(self.guide, pc) if self.guide is not None else pc
        if full.is_false:
            return Unsat()
        return solve(full, self.solver)

    def split(self, path: _Path, cond: Term):
        """Feasibility of (cond, not cond) under the path: each 'sat'|'unsat'|'unknown'."""
        if cond.is_const:
            return ("sat", "unsat") if cond.value else ("unsat", "sat")
        then_pc = sx.pc_and(path.pc, cond)
        else_pc = sx.pc_and(path.pc, sx.mk_not(cond))
        t = _status(self.query(then_pc))
        if t == "unsat" and not path.unknown:
            return t, "sat"
        e = _status(self.query(else_pc))
        if e == "unsat" and t == "unknown" and not path.unknown:
            t = "sat"
        return t, e

    # -------------------------------------------------------------- emission

    def emit(self, path: _Path, status: str, ret: Optional[Term] = None, detail: str = "",
             pc: Optional[PathCondition] = None, effects=None) -> None:
        effects = path.effects if effects is None else effects
        self.summaries.append(PathSummary(
            path_id=len(self.summaries),
            handler=self.h.name,
            pc=path.pc if pc is None else pc,
            final_state=dict(path.env.state),
            return_term=ret,
            effects=tuple(EffectEvent(k, a, i) for i, (k, a) in enumerate(effects)),
            status=status,
            unknown=path.unknown,
            detail=detail,
        ))

    # -------------------------------------------------------------- expressions

    def ev(self, e, path: _Path, guards: list, pending: list) -> Term:
        if isinstance(e, Const):
            return sx.mk_const(self.m.width(e), e.value)
        if isinstance(e, Name):
            if e.ident in self.fields:
                return path.env.state[(e.ident, 0)]
            if e.ident in self.params:
                return self.args[e.ident]
            return path.env.locals[e.ident]
        if isinstance(e, Index):
            idx = self.ev(e.index, path, guards, pending)
            elems = self.elements(e.ident, path)
            guards.append((_in_bounds(idx, len(elems)), e.ident, idx))
            return _select(elems, idx)
        if isinstance(e, Unary):
            return sx.mk_unary(e.op, self.ev(e.arg, path, guards, pending))
        if isinstance(e, Binary):
            a = self.ev(e.lhs, path, guards, pending)
            b = self.ev(e.rhs, path, guards, pending)
            if e.op == "ne":
                return sx.mk_ne(a, b)
            return sx.mk_binary(e.op, a, b)
        if isinstance(e, Cast):
            a = self.ev(e.arg, path, guards, pending)
            return sx.mk_zext(a, e.width) if e.op == "zext" else sx.mk_trunc(a, e.width)
        if isinstance(e, Ite):
            c = self.ev(e.cond, path, guards, pending)
            a = self.ev(e.then, path, guards, pending)
            b = self.ev(e.other, path, guards, pending)
            return sx.mk_ite(c, a, b)
        if isinstance(e, DmaRead):
            addr = self.ev(e.addr, path, guards, pending)
            return self.fetch(e.callsite, addr, path, pending)
        raise TypeError(f"not an expression: {e!r}")

    def fetch(self, callsite: int, addr: Term, path: _Path, pending: list) -> Term:
        k = path.occ.get(callsite, 0)
        path.occ[callsite] = k + 1
        var = dma_var(self.h.name, callsite, k)
        pending.append(("dma_read", (addr, var)))
        return var

    def elements(self, ident: str, path: _Path) -> List[Term]:
        if ident in self.fields:
            f = self.fields[ident]
            return [path.env.state[(ident, i)] for i in range(f.count)]
        return list(self.args[ident])

    # -------------------------------------------------------------- statements

    def check_guards(self, path: _Path, guards: list) -> bool:
        """Fork off the out-of-range error path; False if no in-range path remains."""
        if not guards:
            return True
        ok = sx.mk_true()
        for g, _, _ in guards:
            ok = sx.mk_and(ok, g)
        if ok.is_const and ok.value:
            return True
        t, e = self.split(path, ok)
        if e != "unsat":
            field_name, idx = next((f, i) for g, f, i in guards if not (g.is_const and g.value))
            err_pc = sx.pc_and(path.pc, sx.mk_not(ok))
            saved = path.unknown
            path.unknown = saved or e == "unknown"
            self.emit(path, ERROR, detail=f"index out of range: {field_name}[{sx.to_str(idx)}]",
                      pc=err_pc)
            path.unknown = saved
        if t == "unsat":
            return False
        path.pc = sx.pc_and(path.pc, ok)
        path.unknown = path.unknown or t == "unknown"
        return True

    def commit(self, path: _Path, pending: list) -> None:
        path.effects.extend(pending)

    def step(self, path: _Path, s) -> Optional[List[_Path]]:
        """Execute one statement.  Returns None to continue, or a list of
        successor paths (possibly empty) when the current path stops here."""
        guards: list = []
        pending: list = []
        if isinstance(s, Assign):
            t = s.target
            idx = None
            if isinstance(t, Index):
                idx = self.ev(t.index, path, guards, pending)
                n = len(self.elements(t.ident, path))
                guards.append((_in_bounds(idx, n), t.ident, idx))
            val = self.ev(s.value, path, guards, pending)
            if not self.check_guards(path, guards):
                return []
            self.commit(path, pending)
            if idx is not None:
                f = self.fields[t.ident]
                for i in range(f.count):
                    if i <= sx.mask(idx.width):
                        key = (t.ident, i)
                        hit = sx.mk_eq(idx, sx.mk_const(idx.width, i))
                        path.env.state[key] = sx.mk_ite(hit, val, path.env.state[key])
            elif t.ident in self.fields:
                path.env.state[(t.ident, 0)] = val
            else:
                path.env.locals[t.ident] = val
            return None
        if isinstance(s, If):
            c = self.ev(s.cond, path, guards, pending)
            if not self.check_guards(path, guards):
                return []
            self.commit(path, pending)
            t, e = self.split(path, c)
            succ = []
            if t != "unsat":
                p = path.fork()
                p.pc = sx.pc_and(path.pc, c)
                p.unknown = p.unknown or t == "unknown"
                p.frames.append((s.then, 0))
                succ.append(p)
            if e != "unsat":
                p = path
                p.pc = sx.pc_and(path.pc, sx.mk_not(c))
                p.unknown = p.unknown or e == "unknown"
                p.frames.append((s.other, 0))
                succ.append(p)
            return succ
        if isinstance(s, Intrinsic):
            if s.name == "dma_read":
                addr = self.ev(s.args[0], path, guards, pending)
                self.fetch(s.callsite, addr, path, pending)
                if not self.check_guards(path, guards):
                    return []
                self.commit(path, pending)
                return None
            vals = tuple(self.ev(a, path, guards, pending) for a in s.args)
            if not self.check_guards(path, guards):
                return []
            self.commit(path, pending)
            kind = {"fire_interrupt": "interrupt", "send_output": "output"}.get(s.name, s.name)
            path.effects.append((kind, vals))
            return None
        if isinstance(s, Return):
            val = self.ev(s.value, path, guards, pending)
            if not self.check_guards(path, guards):
                return []
            self.commit(path, pending)
            self.emit(path, COMPLETE, ret=val)
            return []
        if isinstance(s, BoundMarker):
            c = self.ev(s.cond, path, guards, pending)
            if not self.check_guards(path, guards):
                return []
            self.commit(path, pending)
            t, e = self.split(path, c)
            if t != "unsat":
                saved_pc, saved_unknown = path.pc, path.unknown
                path.pc = sx.pc_and(saved_pc, c)
                path.unknown = saved_unknown or t == "unknown"
                self.emit(path, BOUND_EXHAUSTED, detail=f"loop {s.loop_id} exceeded bound {s.bound}")
                path.pc, path.unknown = saved_pc, saved_unknown
            if e == "unsat":
                return []
            path.pc = sx.pc_and(path.pc, sx.mk_not(c))
            path.unknown = path.unknown or e == "unknown"
            return None
        if isinstance(s, While):
            raise AssertionError("loops must be removed before symbolic execution")
        raise TypeError(f"not a statement: {s!r}")

    # -------------------------------------------------------------- driver

    def run(self, env: "SymbolicEnv", args: Sequence, assume: PathCondition) -> Exploration:
        self.args = {p.name: (tuple(a) if p.length is not None else a)
                     for p, a in zip(self.h.params, args)}
        locals_ = {n: sx.mk_const(w, 0) for n, w in self.m.locals[self.h.name].items()}
        first = _status(self.query(assume))
        if first == "unsat":
            return Exploration([])
        start = _Path(SymbolicEnv(dict(env.state), locals_), assume, [], 0, {},
                      first == "unknown", [(self.h.body, 0)])
        work = [start]
        while work:
            if len(self.summaries) >= self.budget.max_paths:
                self.truncated = True
                self.reason = f"max_paths={self.budget.max_paths} reached"
                break
            path = work.pop()
            succ = self.advance(path)
            # reversed so the then-branch is explored first
            work.extend(reversed(succ))
        if len(self.summaries) > self.budget.max_paths:
            del self.summaries[self.budget.max_paths:]
            self.truncated = True
            self.reason = f"max_paths={self.budget.max_paths} reached"
        return Exploration(self.summaries, self.truncated, self.reason)

    def advance(self, path: _Path) -> List[_Path]:
        while path.frames:
            stmts, i = path.frames[-1]
            if i >= len(stmts):
                path.frames.pop()
                continue
            path.frames[-1] = (stmts, i + 1)
            path.steps += 1
            if path.steps > self.budget.max_steps_per_path:
                self.truncated = True
                self.reason = f"max_steps_per_path={self.budget.max_steps_per_path} reached"
                return []
            succ = self.step(path, stmts[i])
            if succ is not None:
                return succ
        self.emit(path, COMPLETE)
        return []


def _status(r) -> str:
    if isinstance(r, Unsat):
        return "unsat"
    if isinstance(r, Unknown):
        return "unknown"
    return "sat"


def _in_bounds(idx: Term, n: int) -> Term:
    if n > sx.mask(idx.width):
        return sx.mk_true()
    return sx.mk_ult(idx, sx.mk_const(idx.width, n))


def _select(elems: List[Term], idx: Term) -> Term:
    if idx.is_const:
        return elems[idx.value] if idx.value < len(elems) else elems[-1]
    reachable = [i for i in range(len(elems)) if i <= sx.mask(idx.width)]
    out = elems[reachable[-1]]
    for i in reversed(reachable[:-1]):
        out = sx.mk_ite(sx.mk_eq(idx, sx.mk_const(idx.width, i)), elems[i], out)
    return out


def _prepare(m: ValidatedModel, h: str, budget: ExploreBudget):
    m = ensure_loop_free(m, budget.default_loop_bound)
    handler = m.handler(h)
    if handler is None:
        raise KeyError(f"model {m.name} has no handler {h}")
    return m, handler


def _check_args(handler, args) -> None:
    if len(args) != len(handler.params):
        raise ValueError(f"{handler.name} takes {len(handler.params)} arguments, got {len(args)}")
    for p, a in zip(handler.params, args):
        if p.length is None:
            ok = isinstance(a, Term) and a.width == p.width
        else:
            ok = len(a) == p.length and all(x.width == p.width for x in a)
        if not ok:
            raise ValueError(f"argument for {handler.name}.{p.name} does not match u{p.width}")


def run_handler(m: ValidatedModel, h: str, env: SymbolicEnv, args: Sequence,
                budget: ExploreBudget = ExploreBudget(), solver: SolverConfig = SolverConfig(),
                assume: PathCondition = sx.TRUE) -> Exploration:
    """Explore every feasible path of handler ``h``."""
    m, handler = _prepare(m, h, budget)
    _check_args(handler, args)
    return _Explorer(m, handler, budget, solver, None).run(env, args, assume)


def run_guided(m: ValidatedModel, h: str, env: SymbolicEnv, args: Sequence, guide: PathCondition,
               budget: ExploreBudget = ExploreBudget(), solver: SolverConfig = SolverConfig(),
               assume: PathCondition = sx.TRUE) -> Exploration:
    """Explore ``h`` keeping only branches compatible with ``guide``.

    Emitted path conditions contain this model's own branch conditions only.
    """
    m, handler = _prepare(m, h, budget)
    _check_args(handler, args)
    if guide.is_false:
        return Exploration([])
    return _Explorer(m, handler, budget, solver, guide).run(env, args, assume)
