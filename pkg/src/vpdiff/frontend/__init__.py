"""Device-model language: parsing, validation and loop removal."""

from .ast import DeviceModel, FieldDecl, Handler, Param, Pos
from .errors import FrontendError, ParseError, ValidationError
from .loops import DEFAULT_LOOP_BOUND, elide_loops
from .parser import SourceUnit, parse_expr, parse_file, parse_model
from .printer import format_expr, format_model
from .validate import ValidatedModel, validate_model


def load_model(path, loop_bound: int = DEFAULT_LOOP_BOUND) -> ValidatedModel:
    """Parse, validate and de-loop a model file in one step."""
    return elide_loops(validate_model(parse_file(path)), loop_bound)


__all__ = [
    "DEFAULT_LOOP_BOUND", "DeviceModel", "FieldDecl", "FrontendError", "Handler", "Param",
    "ParseError", "Pos", "SourceUnit", "ValidatedModel", "ValidationError", "elide_loops",
    "format_expr", "format_model", "load_model", "parse_expr", "parse_file", "parse_model",
    "validate_model",
]
