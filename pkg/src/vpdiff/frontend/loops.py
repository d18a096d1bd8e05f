"""Loop removal: ``@elide`` loops are dropped, every other loop is unrolled."""

from __future__ import annotations

from dataclasses import replace

from .ast import Assign, BoundMarker, If, Return, While, iter_stmts
from .errors import ValidationError
from .validate import ValidatedModel, validate_model

DEFAULT_LOOP_BOUND = 4


def _has_loops(block) -> bool:
    return any(isinstance(s, While) for s in iter_stmts(block))


class _Rewriter:
    def __init__(self, vm: ValidatedModel, handler, default_bound: int):
        self.fields = {f.name for f in vm.state_fields}
        self.handler = handler
        self.default_bound = default_bound
        self.next_loop = 0

    def block(self, stmts) -> tuple:
        out = []
        for s in stmts:
            out.extend(self.stmt(s))
        return tuple(out)

    def stmt(self, s) -> tuple:
        if isinstance(s, If):
            return (replace(s, then=self.block(s.then), other=self.block(s.other)),)
        if not isinstance(s, While):
            return (s,)
        loop_id = self.next_loop
        self.next_loop += 1
        if s.attr == "elide":
            self.check_elidable(s)
            # number the nested loops so ids stay stable; their code is dropped
            self.next_loop += sum(isinstance(x, While) for x in iter_stmts(s.body))
            return ()
        body = self.block(s.body)
        bound = s.unroll if s.attr == "unroll" else self.default_bound
        tail: tuple = (BoundMarker(s.cond, loop_id, bound, s.pos),)
        for _ in range(bound):
            tail = (If(s.cond, body + tail, (), s.pos),)
        return tail

    def check_elidable(self, loop: While) -> None:
        for s in iter_stmts(loop.body):
            if isinstance(s, Assign) and s.target.ident in self.fields:
                raise ValidationError(
                    f"handler {self.handler.name}: elided loop writes state field {s.target.ident}",
                    s, "elide",
                )
            if isinstance(s, Return):
                raise ValidationError(
                    f"handler {self.handler.name}: elided loop contains a return", s, "elide")


def elide_loops(m: ValidatedModel, default_bound: int = DEFAULT_LOOP_BOUND) -> ValidatedModel:
    """Return an equivalent loop-free model (bounded by the unroll depth)."""
    if default_bound < 1:
        raise ValueError("default loop bound must be at least 1")
    if not any(_has_loops(h.body) for h in m.handlers):
        return m
    handlers = []
    for h in m.handlers:
        if _has_loops(h.body):
            h = replace(h, body=_Rewriter(m, h, default_bound).block(h.body))
        handlers.append(h)
    return validate_model(replace(m.model, handlers=tuple(handlers)))
