"""Satisfiability of path conditions.

Two backends share one contract:

* ``builtin`` -- exhaustive enumeration, vectorised with numpy.  Before
  enumerating, a few sound rewrites run: complementary-literal detection,
  propagation of ``var == const`` facts, and splitting the conjunction into
  variable-disjoint components, each of which must fit the bit budget.
* ``external`` -- any SMT-LIB v2 solver reading a script on stdin.

Every ``Sat`` witness is re-checked with :func:`symexpr.eval_term` before it is
returned, so an external solver is never trusted.
"""

from __future__ import annotations

import logging
import os
import shlex
import shutil
import subprocess
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np

from . import symexpr as sx
from .smtlib import SmtParseError, parse_response, to_smtlib
from .symexpr import PathCondition, Term, TermError

log = logging.getLogger(__name__)

ENV_SOLVER = "VPDIFF_SOLVER"
DEFAULT_TIMEOUT_MS = 5000
DEFAULT_BUDGET_BITS = 24
_CHUNK_BITS = 16


class ExternalSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    backend: str = "builtin"
    builtin_budget_bits: int = DEFAULT_BUDGET_BITS
    external_cmd: Optional[str] = None
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self):
        if self.backend not in ("builtin", "external"):
            raise ValueError(f"unknown solver backend {self.backend!r}")
        if self.builtin_budget_bits < 1:
            raise ValueError("builtin_budget_bits must be at least 1")
        if self.timeout_ms < 1:
            raise ValueError("timeout_ms must be positive")


@dataclass(frozen=True)
class Sat:
    assignment: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class Unknown:
    reason: str = ""


SolveResult = object  # Sat | Unsat | Unknown


def is_sat(r) -> bool:
    return isinstance(r, Sat)


def is_unsat(r) -> bool:
    return isinstance(r, Unsat)


def is_unknown(r) -> bool:
    return isinstance(r, Unknown)


# ---------------------------------------------------------------- public entry


def solve(pc: PathCondition, cfg: SolverConfig = SolverConfig(), extra_vars: Iterable[Term] = ()):
    """Decide ``pc``.  ``extra_vars`` are included in a Sat witness (value 0
    when unconstrained) so callers get a total assignment over them."""
    extra = tuple(sorted({v for v in extra_vars if v not in pc.free_vars()}, key=lambda v: v.name))
    _check_names(pc.free_vars() | set(extra))
    if pc.is_false:
        return Unsat()
    cmd = external_cmd(cfg) if cfg.backend == "external" else None
    result = _solve_cached(pc.conjuncts, cfg, cmd)
    if isinstance(result, Sat) and extra:
        full = dict(result.assignment)
        for v in extra:
            full.setdefault(v.name, 0)
        result = Sat(full)
    return result


def _check_names(variables) -> None:
    seen = {}
    for v in variables:
        if seen.setdefault(v.name, v) is not v:
            raise TermError(f"variable {v.name} used with widths {seen[v.name].width} and {v.width}")


@lru_cache(maxsize=65536)
def _solve_cached(conjuncts: Tuple[Term, ...], cfg: SolverConfig, cmd: Optional[str]):
    pc = PathCondition(conjuncts)
    if cfg.backend == "external":
        result = _solve_external(pc, cmd, cfg.timeout_ms)
    else:
        result = _solve_builtin(conjuncts, cfg.builtin_budget_bits)
    if isinstance(result, Sat):
        if not _verify(conjuncts, result.assignment):
            log.warning("solver witness failed verification: %s", dict(result.assignment))
            return Unknown("bad-model")
        result = Sat(dict(sorted(result.assignment.items())))
    return result


def clear_cache() -> None:
    _solve_cached.cache_clear()


def _verify(conjuncts, assignment) -> bool:
    memo: dict = {}
    try:
        return all(sx.eval_term(c, assignment, memo) == 1 for c in conjuncts)
    except sx.MissingAssignment:
        return False


# ---------------------------------------------------------------- builtin


def _solve_builtin(conjuncts: Tuple[Term, ...], budget: int):
    fixed: Dict[Term, Term] = {}
    work = list(conjuncts)
    # propagate v == k (and bare width-1 literals) until nothing changes
    while True:
        facts = {}
        rest = []
        for c in work:
            if c.is_const:
                if c.value == 0:
                    return Unsat()
                continue
            fact = _as_fact(c)
            if fact is not None:
                v, k = fact
                if v in facts and facts[v] is not k:
                    return Unsat()
                facts[v] = k
            else:
                rest.append(c)
        if not facts:
            work = rest
            break
        fixed.update(facts)
        memo: dict = {}
        work = [sx.substitute(c, facts, memo) for c in rest]
    seen = set(work)
    for c in work:
        if sx.mk_not(c) in seen:
            return Unsat()

    assignment = {v.name: k.value for v, k in fixed.items()}
    for component in _components(work):
        variables = sorted({v for c in component for v in c.free_vars()}, key=lambda v: v.name)
        bits = sum(v.width for v in variables)
        if bits > budget:
            return Unknown("budget")
        found = _enumerate(tuple(component), tuple(variables))
        if found is None:
            return Unsat()
        assignment.update(found)
    # variables folded away by propagation are unconstrained; smallest value is 0
    for c in conjuncts:
        for v in c.free_vars():
            assignment.setdefault(v.name, 0)
    return Sat(assignment)


def _as_fact(c: Term):
    if c.op == "var":
        return c, sx.mk_const(1, 1)
    if c.op == "not" and c.args[0].op == "var":
        return c.args[0], sx.mk_const(1, 0)
    if c.op == "eq":
        a, b = c.args
        if a.op == "var" and b.is_const:
            return a, b
        if b.op == "var" and a.is_const:
            return b, a
    return None


def _components(conjuncts):
    """Group conjuncts into classes connected by shared variables (deterministic order)."""
    parent: Dict[Term, Term] = {}

    def find(x):
        while parent[x] is not x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for c in conjuncts:
        vs = list(c.free_vars())
        for v in vs:
            parent.setdefault(v, v)
        for v in vs[1:]:
            ra, rb = find(vs[0]), find(v)
            if ra is not rb:
                parent[rb] = ra
    groups: Dict[Term, list] = {}
    order = []
    for c in conjuncts:
        root = find(next(iter(c.free_vars())))
        if root not in groups:
            groups[root] = []
            order.append(root)
        groups[root].append(c)
    return [groups[r] for r in order]


_U64 = np.uint64
_FULL = np.uint64(0xFFFFFFFFFFFFFFFF)


def _np_mask(width: int):
    return _FULL if width == 64 else _U64((1 << width) - 1)


def _vec_eval(t: Term, env: Dict[Term, np.ndarray], memo: dict):
    """Evaluate ``t`` on a batch of assignments at once."""
    stack = [t]
    while stack:
        node = stack[-1]
        if node in memo:
            stack.pop()
            continue
        if node.op == "const":
            memo[node] = _U64(node.value)
            stack.pop()
            continue
        if node.op == "var":
            memo[node] = env[node]
            stack.pop()
            continue
        pending = [a for a in node.args if a not in memo]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        memo[node] = _vec_apply(node, [memo[a] for a in node.args])
    return memo[t]


def _vec_apply(node: Term, vals):
    op, w = node.op, node.width
    m = _np_mask(w)
    with np.errstate(over="ignore"):
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
        if op in ("shl", "lshr"):
            a, s = vals
            big = s >= _U64(w)
            s = np.minimum(s, _U64(63))
            shifted = (a << s) & m if op == "shl" else a >> s
            return np.where(big, _U64(0), shifted)
        if op == "not":
            return ~vals[0] & m
        if op == "neg":
            return (_U64(0) - vals[0]) & m
        if op == "eq":
            return (vals[0] == vals[1]).astype(np.uint64)
        if op == "ult":
            return (vals[0] < vals[1]).astype(np.uint64)
        if op == "ule":
            return (vals[0] <= vals[1]).astype(np.uint64)
        if op == "zext":
            return vals[0]
        if op == "trunc":
            return vals[0] & m
        if op == "ite":
            return np.where(vals[0] != 0, vals[1], vals[2])
    raise sx.TermError(f"unknown operator {op}")


def _enumerate(conjuncts, variables) -> Optional[Dict[str, int]]:
    """Lexicographically smallest satisfying assignment (name order, then value)."""
    total = sum(v.width for v in variables)
    shifts = []
    acc = total
    for v in variables:
        acc -= v.width
        shifts.append(acc)
    chunk = 1 << min(total, _CHUNK_BITS)
    for start in range(0, 1 << total, chunk):
        idx = np.arange(start, start + chunk, dtype=np.uint64)
        env = {v: (idx >> _U64(s)) & _np_mask(v.width) for v, s in zip(variables, shifts)}
        memo: dict = {}
        ok = np.ones(chunk, dtype=bool)
        for c in conjuncts:
            r = _vec_eval(c, env, memo)
            ok &= np.broadcast_to(r != 0, ok.shape)
            if not ok.any():
                break
        hits = np.flatnonzero(ok)
        if hits.size:
            n = start + int(hits[0])
            return {v.name: (n >> s) & ((1 << v.width) - 1) for v, s in zip(variables, shifts)}
    return None


# ---------------------------------------------------------------- external


def default_external_cmd() -> Optional[str]:
    env = os.environ.get(ENV_SOLVER)
    if env:
        return env
    for exe, args in (("z3", "-in -smt2"), ("cvc5", "--lang smt2 --produce-models"),
                      ("yices-smt2", ""), ("bitwuzla", "")):
        if shutil.which(exe):
            return f"{exe} {args}".strip()
    return None


def external_cmd(cfg: SolverConfig) -> Optional[str]:
    return os.environ.get(ENV_SOLVER) or cfg.external_cmd or default_external_cmd()


def external_available(cfg: SolverConfig = SolverConfig(backend="external")) -> bool:
    cmd = external_cmd(cfg)
    return bool(cmd) and shutil.which(shlex.split(cmd)[0]) is not None


def run_external(script: str, cmd: str, timeout_ms: int) -> str:
    try:
        proc = subprocess.run(
            shlex.split(cmd), input=script, capture_output=True, text=True,
            timeout=timeout_ms / 1000.0,
        )
    except FileNotFoundError as exc:
        raise ExternalSolverError(f"cannot start solver: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise ExternalSolverError(f"solver timed out after {timeout_ms} ms") from exc
    except OSError as exc:
        raise ExternalSolverError(f"solver I/O failure: {exc}") from exc
    if not proc.stdout.strip():
        raise ExternalSolverError(f"solver produced no output (exit {proc.returncode}): "
                                  f"{proc.stderr.strip()[:200]}")
    return proc.stdout


def _solve_external(pc: PathCondition, cmd: Optional[str], timeout_ms: int):
    if not cmd:
        return Unknown("no external solver configured")
    try:
        status, values = parse_response(run_external(to_smtlib(pc), cmd, timeout_ms))
    except (ExternalSolverError, SmtParseError) as exc:
        return Unknown(str(exc))
    if status == "unsat":
        return Unsat()
    if status == "unknown":
        return Unknown("solver returned unknown")
    assignment = {}
    for v in pc.free_vars():
        # solvers may omit variables whose value does not matter
        assignment[v.name] = values.get(v.name, 0) & sx.mask(v.width)
    return Sat(assignment)
