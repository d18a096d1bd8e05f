"""Brute-force differencing by concrete execution.

The oracle runs both versions on every input of a scenario and collects the
diff keys that occur.  It shares no code with the symbolic engine apart from
the AST and the operator semantics, so agreement between the two is strong
evidence that the pipeline neither misses nor invents divergences.

The input space is trimmed without losing any key:

* state fields that neither version's handler mentions keep their initial
  value in both runs, so they are fixed to 0;
* fields that are written but never read can only differ by whether a
  write happened, so the two values {0, 1} suffice for them;
* for packet handlers, ``len`` ranges only over 0..N, the harness assumption.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

from .diffcheck import concrete_diff_keys, field_shapes, run_both
from .frontend.ast import has_dma_read, mentioned_names, read_names
from .frontend.loops import elide_loops
from .harness import HarnessPlan, Scenario

DEFAULT_MAX_BITS = 16


@dataclass(frozen=True)
class OracleResult:
    scenario: str
    enumerated: bool
    input_bits: float
    inputs: int
    keys: frozenset = frozenset()
    reason: str = ""

    def to_json(self) -> dict:
        return {"scenario": self.scenario, "enumerated": self.enumerated,
                "input_bits": round(self.input_bits, 2), "inputs": self.inputs,
                "keys": sorted(self.keys), "reason": self.reason}


def input_domain(plan: HarnessPlan, scenario: Scenario) -> List[Tuple[str, Sequence[int]]]:
    """(variable name, candidate values) for every input the scenario depends on."""
    h_new = plan.new.handler(scenario.handler_name)
    h_old = plan.old.handler(scenario.handler_name)
    mentioned = mentioned_names(h_new.body) | mentioned_names(h_old.body)
    read = read_names(h_new.body) | read_names(h_old.body)
    domain = []
    entries = {}
    for version, m in (("old", plan.old), ("new", plan.new)):
        for f in m.state_fields:
            for i in range(f.count):
                entries[plan.state_var_name(version, f.name, i)] = f
    for var in sorted(entries):
        f = entries[var]
        if f.name not in mentioned:
            continue
        values = range(1 << f.width) if f.name in read else range(min(2, 1 << f.width))
        domain.append((var, values))
    for a in scenario.args:
        if isinstance(a, tuple):
            domain.extend((v.name, range(1 << v.width)) for v in a)
        elif scenario.kind == "env_input":
            data = scenario.args[0]
            domain.append((a.name, range(len(data) + 1)))
        else:
            domain.append((a.name, range(1 << a.width)))
    return domain


def domain_bits(domain) -> float:
    return sum(math.log2(len(values)) for _, values in domain if len(values) > 0)


def exhaustive_keys(plan: HarnessPlan, scenario: Scenario,
                    max_bits: int = DEFAULT_MAX_BITS) -> OracleResult:
    name = scenario.handler_name
    if not scenario.executable:
        return OracleResult(name, False, 0.0, 0, reason="scenario not executable")
    if has_dma_read(plan.new.handler(name).body) or has_dma_read(plan.old.handler(name).body):
        return OracleResult(name, False, math.inf, 0, reason="DMA reads make 64-bit inputs")
    domain = input_domain(plan, scenario)
    bits = domain_bits(domain)
    if bits > max_bits + 1e-9:
        return OracleResult(name, False, bits, 0, reason=f"{bits:.1f} input bits exceed {max_bits}")
    bound = plan.budget.default_loop_bound
    plan = replace(plan, old=elide_loops(plan.old, bound), new=elide_loops(plan.new, bound))
    shapes = field_shapes(plan)
    names = [n for n, _ in domain]
    keys = set()
    count = 0
    for values in itertools.product(*(v for _, v in domain)):
        count += 1
        out_new, out_old = run_both(plan, scenario, dict(zip(names, values)))
        keys.update(concrete_diff_keys(name, out_new, out_old, plan.compare, shapes))
    return OracleResult(name, True, bits, count, frozenset(keys))


def oracle_check(plan: HarnessPlan, max_bits: int = DEFAULT_MAX_BITS) -> List[OracleResult]:
    return [exhaustive_keys(plan, s, max_bits) for s in plan.scenarios if s.executable]


def compare_with_report(results: Sequence[OracleResult], report) -> List[dict]:
    """Per enumerated scenario: keys found only by the oracle or only by the pipeline."""
    confirmed = {u.key for u in report.unique_diffs}
    out = []
    for r in results:
        entry = r.to_json()
        if r.enumerated:
            mine = {k for k in confirmed if k.startswith(r.scenario + ":")}
            entry["missed_by_pipeline"] = sorted(r.keys - mine)
            entry["not_found_by_oracle"] = sorted(mine - r.keys)
            entry["agrees"] = r.keys == mine
        out.append(entry)
    return out
