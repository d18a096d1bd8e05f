"""Deterministic variable names shared by every model version.

The same (field, index), request parameter or DMA fetch site always maps to
the same interned Var, which is what makes final states of two versions
directly comparable.
"""

from __future__ import annotations

from typing import Optional

from ..symexpr import DmaFetch, RequestParam, StateField, Term, mk_var


def state_var(field: str, index: int, width: int, version: str = "") -> Term:
    """The shared Var of a state element; ``version`` gives a per-version copy."""
    return mk_var(state_var_name(field, index, version), width, StateField(field, index))


def request_var(handler: str, param: str, width: int, index: Optional[int] = None) -> Term:
    name = f"req.{handler}.{param}" if index is None else f"req.{handler}.{param}.{index}"
    return mk_var(name, width, RequestParam(handler, param, index))


def dma_var(handler: str, callsite: int, occurrence: int) -> Term:
    return mk_var(f"dma.{handler}.{callsite}.{occurrence}", 64, DmaFetch(handler, callsite, occurrence))


def state_var_name(field: str, index: int, version: str = "") -> str:
    base = f"state.{field}.{index}"
    return f"{base}.{version}" if version else base


def request_args(handler) -> list:
    """Symbolic arguments for one invocation of ``handler``."""
    args = []
    for p in handler.params:
        if p.length is None:
            args.append(request_var(handler.name, p.name, p.width))
        else:
            args.append(tuple(request_var(handler.name, p.name, p.width, i) for i in range(p.length)))
    return args
