"""Shared utilities for the test suite: bundled models and brute-force enumeration."""

from __future__ import annotations

import itertools
import random
from typing import Dict, Iterable, Iterator, List, Sequence

from vpdiff import symexpr as sx
from vpdiff.frontend import load_model
from vpdiff.harness import build_harness
from vpdiff.models import PAIRS, bundled_models, model_path
from vpdiff.solver import external_available

HAS_EXTERNAL = external_available()


def load(name: str):
    return load_model(model_path(name))


def plan_for(old: str, new: str, cfg=None):
    return build_harness(load(old), load(new), cfg)


def bits(variables: Iterable[sx.Term]) -> int:
    return sum(v.width for v in variables)


def all_assignments(variables: Sequence[sx.Term]) -> Iterator[Dict[str, int]]:
    variables = sorted(variables, key=lambda v: v.name)
    names = [v.name for v in variables]
    for values in itertools.product(*(range(1 << v.width) for v in variables)):
        yield dict(zip(names, values))


def sample_assignments(variables: Sequence[sx.Term], n: int, seed: int = 0) -> Iterator[Dict[str, int]]:
    rng = random.Random(seed)
    variables = sorted(variables, key=lambda v: v.name)
    for _ in range(n):
        yield {v.name: rng.getrandbits(v.width) for v in variables}


def summary_vars(paths) -> set:
    acc = set()
    for p in paths:
        acc |= p.pc.free_vars()
        for t in p.final_state.values():
            acc |= t.free_vars()
        if p.return_term is not None:
            acc |= p.return_term.free_vars()
        for ev in p.effects:
            for a in ev.args:
                acc |= a.free_vars()
    return acc


def covering(paths, assignment) -> List:
    return [p for p in paths if p.pc.holds(assignment)]


def relevant_vars(paths, env) -> set:
    """Vars that can influence some path's outcome.

    State elements a path leaves untouched are their own initial Var on every
    path, so their value never decides anything and they can stay fixed.
    """
    acc = set()
    for p in paths:
        acc |= p.pc.free_vars()
        for key, t in p.final_state.items():
            if t is not env.state[key]:
                acc |= t.free_vars()
        if p.return_term is not None:
            acc |= p.return_term.free_vars()
        for ev in p.effects:
            for a in ev.args:
                acc |= a.free_vars()
    return acc


def symbolic_outcome(p, assignment):
    """Evaluate a path summary on a concrete assignment, shaped like ConcreteOutcome."""
    state = {k: sx.eval_term(t, assignment) for k, t in p.final_state.items()}
    ret = None if p.return_term is None else sx.eval_term(p.return_term, assignment)
    effects = tuple((ev.kind,) + tuple(sx.eval_term(a, assignment) for a in ev.args)
                    for ev in p.effects)
    return state, ret, effects, p.status


def concrete_call(m, handler, assignment):
    """Concrete inputs for one handler call taken from a symbolic-variable assignment."""
    from vpdiff.interpreter import request_args, state_var_name

    state = {state_var_name(f.name, i): assignment.get(state_var_name(f.name, i), 0)
             for f in m.state_fields for i in range(f.count)}
    args = []
    for a in request_args(handler):
        if isinstance(a, tuple):
            args.append(tuple(assignment.get(v.name, 0) for v in a))
        else:
            args.append(assignment.get(a.name, 0))
    prefix = f"dma.{handler.name}."
    dma = {tuple(int(x) for x in k[len(prefix):].split(".")): v
           for k, v in assignment.items() if k.startswith(prefix)}
    return state, args, dma


def domain(variables, limit_bits: int = 16, samples: int = 3000, seed: int = 0):
    """Every assignment when small enough, otherwise a seeded sample."""
    if bits(variables) <= limit_bits:
        return list(all_assignments(variables)), True
    return list(sample_assignments(variables, samples, seed)), False


__all__ = [
    "HAS_EXTERNAL", "PAIRS", "all_assignments", "bits", "bundled_models", "covering", "load",
    "model_path", "plan_for", "sample_assignments", "summary_vars", "relevant_vars",
    "symbolic_outcome", "concrete_call", "domain",
]
