"""Differential symbolic regression testing for virtual device models.

Two versions of a device model written in a small DSL are executed
symbolically; the old version is explored under each path condition of the
new one, and every reachable divergence in device state, read results or
side effects is reported with a concrete, replay-checked witness.
"""

from .diffcheck import DiffRecord, Report, compare_pair, dedupe, run_pipeline
from .frontend import load_model, parse_model, validate_model
from .harness import ConfigError, IncompatibleModels, build_harness
from .solver import Sat, SolverConfig, Unknown, Unsat, solve

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DiffRecord", "IncompatibleModels", "Report", "Sat", "SolverConfig",
    "Unknown", "Unsat", "build_harness", "compare_pair", "dedupe", "load_model", "parse_model",
    "run_pipeline", "solve", "validate_model",
]
