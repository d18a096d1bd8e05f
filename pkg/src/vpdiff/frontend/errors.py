from __future__ import annotations


class FrontendError(Exception):
    """Base class for problems found in model source."""


class ParseError(FrontendError):
    def __init__(self, message, line=1, col=1, expected=(), path=None):
        self.message = message
        self.line = line
        self.col = col
        self.expected = tuple(sorted(set(expected)))
        self.path = path
        super().__init__(str(self))

    def __str__(self) -> str:
        where = f"{self.path}:" if self.path else ""
        text = f"{where}{self.line}:{self.col}: {self.message}"
        if self.expected:
            text += " (expected one of: " + ", ".join(self.expected) + ")"
        return text


class ValidationError(FrontendError):
    def __init__(self, message, node=None, rule=None):
        self.message = message
        self.node = node
        self.rule = rule
        super().__init__(str(self))

    def __str__(self) -> str:
        pos = getattr(self.node, "pos", None)
        if pos is not None and pos.line:
            return f"{pos}: {self.message}"
        return self.message
