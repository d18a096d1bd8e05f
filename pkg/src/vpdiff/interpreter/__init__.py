from .concrete import ConcreteOutcome, run_concrete
from .naming import dma_var, request_args, request_var, state_var, state_var_name
from .symbolic import (
    BOUND_EXHAUSTED, COMPLETE, ERROR, EffectEvent, ExploreBudget, Exploration, PathSummary,
    SymbolicEnv, init_env, run_guided, run_handler,
)

__all__ = [
    "BOUND_EXHAUSTED", "COMPLETE", "ConcreteOutcome", "ERROR", "EffectEvent", "ExploreBudget",
    "Exploration", "PathSummary", "SymbolicEnv", "dma_var", "init_env", "request_args",
    "request_var", "run_concrete", "run_guided", "run_handler", "state_var", "state_var_name",
]
