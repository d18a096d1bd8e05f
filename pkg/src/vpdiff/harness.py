"""Pairing two model versions into comparison scenarios.

A scenario is one handler invoked once on a fully symbolic device state with
fully symbolic request arguments.  Both versions receive the very same Var
terms, so their final states are directly comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Mapping, Optional, Tuple

from . import symexpr as sx
from .frontend.validate import ValidatedModel
from .interpreter.naming import request_args, state_var_name
from .interpreter.symbolic import ExploreBudget
from .solver import SolverConfig
from .symexpr import PathCondition

BOTH, OLD_ONLY, NEW_ONLY = "both", "old_only", "new_only"

_CONFIG_KEYS = {
    "handlers": {"include", "exclude"},
    "compare": {"fields", "exclude", "return", "effects"},
    "budget": {"max_paths", "max_steps_per_path", "loop_bound"},
    "solver": {"backend", "budget_bits", "external_cmd", "timeout_ms"},
}


class ConfigError(ValueError):
    """The configuration document is malformed or names something unknown."""


class IncompatibleModels(ValueError):
    """The two versions share no comparable state."""


@dataclass(frozen=True)
class StructuralNote:
    kind: str  # handler-only-in-old | handler-only-in-new | field-only-in-old | ...
    subject: str
    detail: str

    def to_json(self) -> dict:
        return {"kind": self.kind, "subject": self.subject, "detail": self.detail}

    def __str__(self) -> str:
        return f"{self.kind}: {self.subject} ({self.detail})"


@dataclass(frozen=True)
class Scenario:
    handler_name: str
    present_in: str
    kind: Optional[str] = None
    request_vars: Tuple[Tuple[str, int], ...] = ()
    args: Tuple[Any, ...] = ()
    assume: PathCondition = sx.TRUE
    compatible: bool = True

    @property
    def executable(self) -> bool:
        return self.present_in == BOTH and self.compatible


@dataclass(frozen=True)
class CompareSpec:
    state_fields: Tuple[str, ...]
    compare_return: bool = True
    compare_effects: bool = True
    effect_comparison: str = "ordered"


@dataclass(frozen=True)
class HarnessPlan:
    old: ValidatedModel
    new: ValidatedModel
    scenarios: Tuple[Scenario, ...]
    compare: CompareSpec
    budget: ExploreBudget = ExploreBudget()
    solver: SolverConfig = SolverConfig()
    structural: Tuple[StructuralNote, ...] = ()

    def scenario(self, name: str) -> Optional[Scenario]:
        return next((s for s in self.scenarios if s.handler_name == name), None)

    @property
    def private_fields(self) -> frozenset:
        """Fields declared with different shapes; each version gets its own Vars."""
        return frozenset(n.subject for n in self.structural if n.kind == "field-shape-mismatch")

    def state_var_name(self, version: str, field: str, index: int) -> str:
        return state_var_name(field, index, version if field in self.private_fields else "")


# ---------------------------------------------------------------- config


def load_config(source) -> dict:
    """Read and check a config document (path, JSON text or dict)."""
    if source is None:
        return {}
    if isinstance(source, Mapping):
        doc = dict(source)
    else:
        path = Path(source)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {source}") from exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: invalid JSON: {exc}") from exc
    check_config(doc)
    return doc


def check_config(doc) -> None:
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a JSON object")
    for section, value in doc.items():
        if section not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(value, Mapping):
            raise ConfigError(f"config section {section!r} must be an object")
        for key in value:
            if key not in _CONFIG_KEYS[section]:
                raise ConfigError(f"unknown key {section}.{key}")
    for section, key in (("handlers", "include"), ("handlers", "exclude"),
                         ("compare", "fields"), ("compare", "exclude")):
        v = doc.get(section, {}).get(key)
        if v is not None and not (isinstance(v, list) and all(isinstance(x, str) for x in v)):
            raise ConfigError(f"{section}.{key} must be a list of names")
    for key in ("return", "effects"):
        v = doc.get("compare", {}).get(key)
        if v is not None and not isinstance(v, bool):
            raise ConfigError(f"compare.{key} must be true or false")


def _int_option(section: Mapping, key: str, default: int, where: str) -> int:
    v = section.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"{where}.{key} must be a positive integer")
    return v


def budget_from_config(doc: Mapping) -> ExploreBudget:
    b = doc.get("budget", {})
    d = ExploreBudget()
    return ExploreBudget(
        max_paths=_int_option(b, "max_paths", d.max_paths, "budget"),
        max_steps_per_path=_int_option(b, "max_steps_per_path", d.max_steps_per_path, "budget"),
        default_loop_bound=_int_option(b, "loop_bound", d.default_loop_bound, "budget"),
    )


def solver_from_config(doc: Mapping) -> SolverConfig:
    s = doc.get("solver", {})
    d = SolverConfig()
    backend = s.get("backend", d.backend)
    if backend not in ("builtin", "external"):
        raise ConfigError(f"solver.backend must be builtin or external, not {backend!r}")
    cmd = s.get("external_cmd")
    if cmd is not None and not isinstance(cmd, str):
        raise ConfigError("solver.external_cmd must be a string")
    return SolverConfig(
        backend=backend,
        builtin_budget_bits=_int_option(s, "budget_bits", d.builtin_budget_bits, "solver"),
        external_cmd=cmd,
        timeout_ms=_int_option(s, "timeout_ms", d.timeout_ms, "solver"),
    )


# ---------------------------------------------------------------- pairing


def _signature(h) -> tuple:
    return (h.kind, tuple((p.name, p.width, p.length) for p in h.params), h.return_width)


def _shape(f) -> str:
    return f"u{f.width}" if f.length is None else f"u{f.width}[{f.length}]"


def _request_vars(args) -> Tuple[Tuple[str, int], ...]:
    out = []
    for a in args:
        for v in (a if isinstance(a, tuple) else (a,)):
            out.append((v.name, v.width))
    return tuple(out)


def _assumption(handler, args) -> PathCondition:
    if handler.kind != "env_input":
        return sx.TRUE
    data, length = args
    # the buffer is symbolic at its maximum size; len says how much of it is valid
    return sx.pc_and(sx.TRUE, sx.mk_ule(length, sx.mk_const(8, len(data))))


def build_harness(old: ValidatedModel, new: ValidatedModel, cfg=None) -> HarnessPlan:
    doc = load_config(cfg)
    notes: List[StructuralNote] = []

    old_fields = {f.name: f for f in old.state_fields}
    new_fields = {f.name: f for f in new.state_fields}
    comparable = []
    for f in new.state_fields:
        g = old_fields.get(f.name)
        if g is None:
            notes.append(StructuralNote("field-only-in-new", f.name, _shape(f)))
        elif (f.width, f.length) != (g.width, g.length):
            notes.append(StructuralNote("field-shape-mismatch", f.name,
                                        f"old {_shape(g)}, new {_shape(f)}"))
        else:
            comparable.append(f.name)
    for g in old.state_fields:
        if g.name not in new_fields:
            notes.append(StructuralNote("field-only-in-old", g.name, _shape(g)))
    if not comparable:
        raise IncompatibleModels(
            f"{old.version_tag or old.name} and {new.version_tag or new.name} share no state field "
            "with the same shape; nothing to compare")

    comp = doc.get("compare", {})
    known_fields = set(old_fields) | set(new_fields)
    for name in comp.get("fields", []) + comp.get("exclude", []):
        if name not in known_fields:
            raise ConfigError(f"config names unknown field {name!r}")
    if "fields" in comp:
        for name in comp["fields"]:
            if name not in comparable:
                raise ConfigError(f"field {name!r} cannot be compared: it is not declared with "
                                  "the same shape in both versions")
        wanted = set(comp["fields"])
        selected = [n for n in comparable if n in wanted]
    else:
        selected = list(comparable)
    excluded = set(comp.get("exclude", []))
    spec = CompareSpec(
        state_fields=tuple(n for n in selected if n not in excluded),
        compare_return=comp.get("return", True),
        compare_effects=comp.get("effects", True),
    )

    old_h = {h.name: h for h in old.handlers}
    new_h = {h.name: h for h in new.handlers}
    names = [h.name for h in new.handlers] + [h.name for h in old.handlers if h.name not in new_h]
    hsel = doc.get("handlers", {})
    for name in hsel.get("include", []) + hsel.get("exclude", []):
        if name not in old_h and name not in new_h:
            raise ConfigError(f"config names unknown handler {name!r}")
    if "include" in hsel:
        names = [n for n in names if n in set(hsel["include"])]
    names = [n for n in names if n not in set(hsel.get("exclude", []))]

    scenarios = []
    for name in names:
        h_new, h_old = new_h.get(name), old_h.get(name)
        if h_old is None:
            notes.append(StructuralNote("handler-only-in-new", name, h_new.kind))
            scenarios.append(Scenario(name, NEW_ONLY, h_new.kind))
            continue
        if h_new is None:
            notes.append(StructuralNote("handler-only-in-old", name, h_old.kind))
            scenarios.append(Scenario(name, OLD_ONLY, h_old.kind))
            continue
        if _signature(h_new) != _signature(h_old):
            notes.append(StructuralNote("handler-signature-mismatch", name,
                                        f"old {_signature(h_old)}, new {_signature(h_new)}"))
            scenarios.append(Scenario(name, BOTH, h_new.kind, compatible=False))
            continue
        args = tuple(request_args(h_new))
        scenarios.append(Scenario(name, BOTH, h_new.kind, _request_vars(args), args,
                                  _assumption(h_new, args)))
    if not scenarios:
        raise ConfigError("no handler left to check after applying handlers.include/exclude")

    return HarnessPlan(old, new, tuple(scenarios), spec, budget_from_config(doc),
                       solver_from_config(doc), tuple(notes))
