"""The differential pipeline.

For each scenario the new version is explored exhaustively; then, for each
new path condition C, the old version is explored guided by C.  Every
(new path, old path) pair whose joint condition is satisfiable is compared
element by element, and each divergence the solver can witness becomes a
:class:`DiffRecord`.  Confirmed witnesses are replayed concretely through
both versions before they are reported.
"""

from __future__ import annotations

import resource
import time
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from . import symexpr as sx
from .harness import CompareSpec, HarnessPlan, Scenario
from .interpreter.concrete import ConcreteOutcome, run_concrete
from .interpreter.naming import state_var_name
from .interpreter.symbolic import (
    BOUND_EXHAUSTED, PathSummary, init_env, run_guided, run_handler,
)
from .solver import Sat, SolverConfig, Unsat, solve
from .symexpr import Term

STATE, RETURN, EFFECT, ERROR_PATH, STRUCTURAL = "STATE", "RETURN", "EFFECT", "ERROR_PATH", "STRUCTURAL"
CONFIRMED, POSSIBLE = "CONFIRMED", "POSSIBLE"
KIND_MISMATCH, ARG_MISMATCH, LENGTH_MISMATCH = "kind-mismatch", "arg-mismatch", "length-mismatch"


@dataclass(frozen=True)
class DiffRecord:
    scenario: str
    kind: str
    certainty: str
    witness: Optional[Mapping[str, int]] = None
    new_path_id: int = -1
    old_path_id: int = -1
    field_name: Optional[str] = None
    index: Optional[int] = None
    position: Optional[int] = None
    detail: str = ""
    new_value_term: Optional[Term] = None
    old_value_term: Optional[Term] = None

    @property
    def location(self) -> str:
        if self.kind == STATE:
            return self.field_name if self.index is None else f"{self.field_name}[{self.index}]"
        if self.kind == EFFECT:
            return f"{self.position}:{self.detail}"
        if self.kind == STRUCTURAL:
            return self.field_name or ""
        return ""

    @property
    def key(self) -> str:
        loc = self.location
        return f"{self.scenario}:{self.kind}" + (f":{loc}" if loc else "")


@dataclass(frozen=True)
class UniqueDiff:
    key: str
    representative: DiffRecord
    count: int

    @property
    def certainty(self) -> str:
        return self.representative.certainty


# ---------------------------------------------------------------- comparison


def _term_vars(p: PathSummary) -> set:
    acc = set(p.pc.free_vars())
    for t in p.final_state.values():
        acc |= t.free_vars()
    if p.return_term is not None:
        acc |= p.return_term.free_vars()
    for ev in p.effects:
        for a in ev.args:
            acc |= a.free_vars()
    return acc


def _common(a: Term, b: Term) -> Tuple[Term, Term]:
    w = max(a.width, b.width)
    return sx.mk_zext(a, w), sx.mk_zext(b, w)


def _effect_args(ev) -> tuple:
    # a DMA read is identified by its address; the fetched value is an input
    return ev.args[:1] if ev.kind == "dma_read" else ev.args


class _Pair:
    def __init__(self, newp, oldp, solver, scenario):
        self.newp, self.oldp = newp, oldp
        self.solver = solver
        self.scenario = scenario
        self.phi = sx.pc_conj(newp.pc, oldp.pc)
        self.extra = tuple(sorted(_term_vars(newp) | _term_vars(oldp), key=lambda v: v.name))

    def witness(self, cond: Optional[Term]):
        q = self.phi if cond is None else sx.pc_and(self.phi, cond)
        return solve(q, self.solver, self.extra)

    def record(self, result, kind, **kw) -> Optional[DiffRecord]:
        if isinstance(result, Unsat):
            return None
        sat = isinstance(result, Sat)
        return DiffRecord(
            scenario=self.scenario, kind=kind, certainty=CONFIRMED if sat else POSSIBLE,
            witness=dict(result.assignment) if sat else None,
            new_path_id=self.newp.path_id, old_path_id=self.oldp.path_id, **kw)


def compare_pair(newp: PathSummary, oldp: PathSummary, spec: CompareSpec,
                 solver: SolverConfig = SolverConfig(), scenario: Optional[str] = None,
                 shapes: Optional[Mapping[str, Optional[int]]] = None) -> List[DiffRecord]:
    """Divergences between one new-version path and one guided old-version path.

    ``shapes`` maps field names to their array length (None for scalars); by
    default it is inferred from the state snapshot.
    """
    scenario = scenario or newp.handler
    pair = _Pair(newp, oldp, solver, scenario)
    if pair.phi.is_false:
        return []
    joint = pair.witness(None)
    if isinstance(joint, Unsat):
        return []
    if newp.status != oldp.status:
        rec = pair.record(joint, ERROR_PATH, detail=f"new {newp.status}, old {oldp.status}")
        return [rec]

    out: List[DiffRecord] = []

    def diverge(a: Term, b: Term, kind: str, **kw) -> None:
        if a is b:
            return
        a, b = _common(a, b)
        cond = sx.mk_ne(a, b)
        if cond.is_const and cond.value == 0:
            return
        rec = pair.record(pair.witness(cond), kind, new_value_term=a, old_value_term=b, **kw)
        if rec is not None:
            out.append(rec)

    for name in spec.state_fields:
        indices = sorted(i for (f, i) in newp.final_state if f == name)
        scalar = shapes[name] is None if shapes is not None else indices == [0]
        for i in indices:
            diverge(newp.final_state[(name, i)], oldp.final_state[(name, i)], STATE,
                    field_name=name, index=None if scalar else i)

    if spec.compare_return and newp.return_term is not None and oldp.return_term is not None:
        diverge(newp.return_term, oldp.return_term, RETURN)

    if spec.compare_effects:
        ne, oe = newp.effects, oldp.effects
        n = min(len(ne), len(oe))
        for i in range(n):
            if ne[i].kind != oe[i].kind:
                rec = pair.record(joint, EFFECT, position=i, detail=KIND_MISMATCH)
                out.append(rec)
                continue
            conds = []
            for a, b in zip(_effect_args(ne[i]), _effect_args(oe[i])):
                if a is not b:
                    a, b = _common(a, b)
                    conds.append(sx.mk_ne(a, b))
            if not conds:
                continue
            cond = conds[0]
            for c in conds[1:]:
                cond = sx.mk_or(cond, c)
            if cond.is_const and cond.value == 0:
                continue
            rec = pair.record(pair.witness(cond), EFFECT, position=i, detail=ARG_MISMATCH)
            if rec is not None:
                out.append(rec)
        if len(ne) != len(oe):
            out.append(pair.record(joint, EFFECT, position=n, detail=LENGTH_MISMATCH))
    return out


# ---------------------------------------------------------------- dedup


def dedupe(records: Iterable[DiffRecord]) -> List[UniqueDiff]:
    """Collapse records sharing (scenario, kind, location) into unique diffs.

    Groups keep first-appearance order; the representative is the earliest
    confirmed record by (new_path_id, old_path_id), falling back to the
    earliest possible one.
    """
    groups: Dict[str, List[DiffRecord]] = {}
    for r in records:
        groups.setdefault(r.key, []).append(r)
    out = []
    for key, recs in groups.items():
        rank = sorted(recs, key=lambda r: (r.certainty != CONFIRMED, r.new_path_id, r.old_path_id))
        out.append(UniqueDiff(key, rank[0], len(recs)))
    return out


# ---------------------------------------------------------------- concrete differencing


def _effect_values(e: tuple) -> tuple:
    kind = e[0]
    return e[1:2] if kind == "dma_read" else e[1:]


def concrete_diff_keys(scenario: str, out_new: ConcreteOutcome, out_old: ConcreteOutcome,
                       spec: CompareSpec, shapes: Mapping[str, Optional[int]]) -> List[str]:
    """Diff keys exhibited by one concrete input (same key scheme as DiffRecord)."""
    if out_new.status != out_old.status:
        return [f"{scenario}:{ERROR_PATH}"]
    keys = []
    for name in spec.state_fields:
        count = shapes[name] or 1
        for i in range(count):
            if out_new.state[(name, i)] != out_old.state[(name, i)]:
                loc = name if shapes[name] is None else f"{name}[{i}]"
                keys.append(f"{scenario}:{STATE}:{loc}")
    if (spec.compare_return and out_new.return_value is not None
            and out_old.return_value is not None and out_new.return_value != out_old.return_value):
        keys.append(f"{scenario}:{RETURN}")
    if spec.compare_effects:
        ne, oe = out_new.effects, out_old.effects
        n = min(len(ne), len(oe))
        for i in range(n):
            if ne[i][0] != oe[i][0]:
                keys.append(f"{scenario}:{EFFECT}:{i}:{KIND_MISMATCH}")
            elif _effect_values(ne[i]) != _effect_values(oe[i]):
                keys.append(f"{scenario}:{EFFECT}:{i}:{ARG_MISMATCH}")
        if len(ne) != len(oe):
            keys.append(f"{scenario}:{EFFECT}:{n}:{LENGTH_MISMATCH}")
    return keys


def field_shapes(plan: HarnessPlan) -> Dict[str, Optional[int]]:
    return {f.name: f.length for f in plan.new.state_fields}


def concrete_inputs(plan: HarnessPlan, scenario: Scenario, assignment: Mapping[str, int]):
    """Turn a variable assignment into (state_new, state_old, args, dma_oracle)."""
    def state_of(m, version):
        return {state_var_name(f.name, i): assignment.get(plan.state_var_name(version, f.name, i), 0)
                for f in m.state_fields for i in range(f.count)}

    args = []
    for a in scenario.args:
        if isinstance(a, tuple):
            args.append(tuple(assignment.get(v.name, 0) for v in a))
        else:
            args.append(assignment.get(a.name, 0))
    prefix = f"dma.{scenario.handler_name}."
    dma = {}
    for name, value in assignment.items():
        if name.startswith(prefix):
            callsite, occurrence = name[len(prefix):].split(".")
            dma[(int(callsite), int(occurrence))] = value
    return state_of(plan.new, "new"), state_of(plan.old, "old"), args, dma


def run_both(plan: HarnessPlan, scenario: Scenario, assignment: Mapping[str, int]):
    st_new, st_old, args, dma = concrete_inputs(plan, scenario, assignment)
    bound = plan.budget.default_loop_bound
    h = scenario.handler_name
    return (run_concrete(plan.new, h, st_new, args, dma, bound),
            run_concrete(plan.old, h, st_old, args, dma, bound))


def replay_witness(plan: HarnessPlan, record: DiffRecord) -> bool:
    """Run both versions on the record's witness and check it shows the divergence."""
    if record.witness is None:
        return False
    scenario = plan.scenario(record.scenario)
    out_new, out_old = run_both(plan, scenario, record.witness)
    return record.key in concrete_diff_keys(record.scenario, out_new, out_old, plan.compare,
                                            field_shapes(plan))


# ---------------------------------------------------------------- pipeline


@dataclass
class ScenarioResult:
    handler: str
    present_in: str
    executed: bool = False
    paths_new: int = 0
    paths_old: int = 0
    records: List[DiffRecord] = field(default_factory=list)
    incomplete: List[dict] = field(default_factory=list)
    truncated: bool = False
    reason: str = ""

    def to_json(self) -> dict:
        confirmed = {r.key for r in self.records if r.certainty == CONFIRMED}
        possible = {r.key for r in self.records} - confirmed
        return {
            "handler": self.handler,
            "present_in": self.present_in,
            "executed": self.executed,
            "paths_new": self.paths_new,
            "paths_old": self.paths_old,
            "raw_diffs": sum(r.certainty == CONFIRMED for r in self.records),
            "unique_diffs": len(confirmed),
            "possible_diffs": len(possible),
            "truncated": self.truncated,
            "reason": self.reason,
        }


@dataclass
class Report:
    old_tag: str
    new_tag: str
    scenarios: List[ScenarioResult]
    unique_diffs: List[UniqueDiff]
    possible_diffs: List[UniqueDiff]
    structural: List[DiffRecord]
    raw_diffs: int
    replay_failures: List[DiffRecord] = field(default_factory=list)
    wall_time_ms: Optional[float] = None
    peak_memory_mb: Optional[float] = None
    oracle: Optional[list] = None

    @property
    def paths_new(self) -> int:
        return sum(s.paths_new for s in self.scenarios)

    @property
    def paths_old(self) -> int:
        return sum(s.paths_old for s in self.scenarios)

    @property
    def truncated(self) -> bool:
        return any(s.truncated for s in self.scenarios)

    @property
    def incomplete_paths(self) -> List[dict]:
        return [p for s in self.scenarios for p in s.incomplete]

    @property
    def records(self) -> List[DiffRecord]:
        return [r for s in self.scenarios for r in s.records]

    def exit_code(self) -> int:
        if self.unique_diffs or self.structural:
            return 1
        if self.truncated:
            return 5
        if self.possible_diffs:
            return 2
        return 0

    def to_json(self, timing: bool = False) -> dict:
        pair = {
            "old": self.old_tag,
            "new": self.new_tag,
            "scenarios": [s.to_json() for s in self.scenarios],
            "paths_new": self.paths_new,
            "paths_old": self.paths_old,
            "num_paths": self.paths_new,
            "raw_diffs": self.raw_diffs,
            "num_differences": len(self.unique_diffs),
            "unique_diffs": [_unique_json(u) for u in self.unique_diffs],
            "possible_diffs": [_unique_json(u) for u in self.possible_diffs],
            "structural": [_structural_json(r) for r in self.structural],
            "incomplete_paths": self.incomplete_paths,
            "truncated": self.truncated,
            "replay_failures": [r.key for r in self.replay_failures],
            "wall_time_ms": round(self.wall_time_ms, 1) if timing and self.wall_time_ms is not None else None,
            "peak_memory_mb": round(self.peak_memory_mb, 1) if timing and self.peak_memory_mb is not None else None,
        }
        if self.oracle is not None:
            pair["oracle"] = self.oracle
        return {"pairs": [pair]}


def _unique_json(u: UniqueDiff) -> dict:
    r = u.representative
    out = {
        "key": u.key,
        "kind": r.kind,
        "certainty": r.certainty,
        "witness": dict(sorted(r.witness.items())) if r.witness is not None else None,
        "count": u.count,
        "new_path_id": r.new_path_id,
        "old_path_id": r.old_path_id,
    }
    if r.new_value_term is not None:
        out["new_value"] = sx.to_str(r.new_value_term)
        out["old_value"] = sx.to_str(r.old_value_term)
    if r.detail:
        out["detail"] = r.detail
    return out


def _structural_json(r: DiffRecord) -> dict:
    return {"key": r.key, "subject": r.field_name, "detail": r.detail}


def _structural_records(plan: HarnessPlan) -> List[DiffRecord]:
    out = []
    for note in plan.structural:
        scenario = note.subject if note.kind.startswith("handler") else "state"
        out.append(DiffRecord(scenario=scenario, kind=STRUCTURAL, certainty=CONFIRMED,
                              field_name=f"{note.kind}:{note.subject}", detail=note.detail))
    return out


def _incomplete(version: str, p: PathSummary, guide: Optional[int] = None) -> dict:
    out = {"handler": p.handler, "version": version, "path_id": p.path_id, "status": p.status,
           "detail": p.detail, "pc": str(p.pc)}
    if guide is not None:
        out["guide_path_id"] = guide
    return out


def run_scenario(plan: HarnessPlan, scenario: Scenario) -> ScenarioResult:
    res = ScenarioResult(scenario.handler_name, scenario.present_in)
    if not scenario.executable:
        return res
    res.executed = True
    h = scenario.handler_name
    shapes = field_shapes(plan)
    new_env = init_env(plan.new, plan.private_fields, "new")
    old_env = init_env(plan.old, plan.private_fields, "old")
    new_paths = run_handler(plan.new, h, new_env, scenario.args, plan.budget, plan.solver,
                            scenario.assume)
    res.paths_new = len(new_paths)
    if new_paths.truncated:
        res.truncated, res.reason = True, f"new version: {new_paths.reason}"
    for newp in new_paths:
        if newp.status == BOUND_EXHAUSTED:
            res.incomplete.append(_incomplete("new", newp))
        old_paths = run_guided(plan.old, h, old_env, scenario.args, newp.pc, plan.budget,
                               plan.solver, scenario.assume)
        res.paths_old += len(old_paths)
        if old_paths.truncated and not res.truncated:
            res.truncated, res.reason = True, f"old version: {old_paths.reason}"
        for oldp in old_paths:
            if oldp.status == BOUND_EXHAUSTED:
                res.incomplete.append(_incomplete("old", oldp, newp.path_id))
            res.records.extend(compare_pair(newp, oldp, plan.compare, plan.solver, h, shapes))
    return res


def run_pipeline(plan: HarnessPlan, replay: bool = True) -> Report:
    """Run every scenario of ``plan`` and assemble the report.

    A scenario that fails unexpectedly is marked truncated with the failure
    as its reason; the remaining scenarios still run.
    """
    start = time.perf_counter()
    results = []
    for scenario in plan.scenarios:
        try:
            results.append(run_scenario(plan, scenario))
        except Exception as exc:  # one broken scenario must not sink the whole report
            res = ScenarioResult(scenario.handler_name, scenario.present_in, executed=True,
                                 truncated=True, reason=f"aborted: {type(exc).__name__}: {exc}")
            results.append(res)

    failures = []
    if replay:
        for res in results:
            fixed = []
            for r in res.records:
                if r.certainty == CONFIRMED and not replay_witness(plan, r):
                    failures.append(r)
                    r = replace(r, certainty=POSSIBLE, detail=(r.detail + " replay-failed").strip())
                fixed.append(r)
            res.records = fixed

    records = [r for res in results for r in res.records]
    groups = dedupe(records)
    unique = [u for u in groups if u.certainty == CONFIRMED]
    possible = [u for u in groups if u.certainty != CONFIRMED]
    wall = (time.perf_counter() - start) * 1000.0
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
    return Report(
        old_tag=plan.old.version_tag or plan.old.name,
        new_tag=plan.new.version_tag or plan.new.name,
        scenarios=results,
        unique_diffs=unique,
        possible_diffs=possible,
        structural=_structural_records(plan),
        raw_diffs=sum(r.certainty == CONFIRMED for r in records),
        replay_failures=failures,
        wall_time_ms=wall,
        peak_memory_mb=peak,
    )


def format_report(report: Report, timing: bool = True) -> str:
    """Compact text rendering: one row per scenario, then the differences."""
    lines = [f"{report.old_tag} -> {report.new_tag}", ""]
    header = f"{'scenario':<16} {'# of Paths (new/old)':>21} {'# of Differences':>17} {'possible':>9}  note"
    lines.append(header)
    lines.append("-" * len(header))
    for s in report.scenarios:
        js = s.to_json()
        if not s.executed:
            note = s.present_in if s.present_in != "both" else "signature mismatch"
            lines.append(f"{s.handler:<16} {'-':>21} {'-':>17} {'-':>9}  not run ({note})")
            continue
        note = f"truncated: {s.reason}" if s.truncated else ""
        paths = f"{s.paths_new}/{s.paths_old}"
        lines.append(f"{s.handler:<16} {paths:>21} {js['unique_diffs']:>17} "
                     f"{js['possible_diffs']:>9}  {note}".rstrip())
    lines.append("-" * len(header))
    total_paths = f"{report.paths_new}/{report.paths_old}"
    lines.append(f"{'total':<16} {total_paths:>21} {len(report.unique_diffs):>17} "
                 f"{len(report.possible_diffs):>9}")
    lines.append(f"raw diffs: {report.raw_diffs}")
    if report.unique_diffs:
        lines += ["", "differences:"]
        lines += [_describe(u) for u in report.unique_diffs]
    if report.possible_diffs:
        lines += ["", "possible differences (solver could not decide):"]
        lines += [_describe(u) for u in report.possible_diffs]
    if report.structural:
        lines += ["", "structural differences:"]
        lines += [f"  {r.field_name} ({r.detail})" for r in report.structural]
    if report.incomplete_paths:
        lines += ["", "incomplete paths (loop bound reached):"]
        lines += [f"  {p['handler']} {p['version']} path {p['path_id']}: {p['detail']}"
                  for p in report.incomplete_paths]
    if report.replay_failures:
        lines += ["", "witness replay failures:"]
        lines += [f"  {r.key}" for r in report.replay_failures]
    if timing and report.wall_time_ms is not None:
        lines += ["", f"wall time: {report.wall_time_ms:.1f} ms, peak memory: {report.peak_memory_mb:.1f} MB"]
    return "\n".join(lines) + "\n"


def _describe(u: UniqueDiff) -> str:
    r = u.representative
    text = f"  {u.key}  (x{u.count})"
    if r.new_value_term is not None:
        text += f"\n      new: {sx.to_str(r.new_value_term)}\n      old: {sx.to_str(r.old_value_term)}"
    if r.witness is not None:
        shown = ", ".join(f"{k}={v}" for k, v in sorted(r.witness.items()))
        text += f"\n      witness: {shown or '(any input)'}"
    return text
