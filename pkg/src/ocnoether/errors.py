"""Exception hierarchy shared by all subpackages."""

from __future__ import annotations


class OCNoetherError(Exception):
    """Base class for every error raised by this package."""


class SymbolicError(OCNoetherError):
    pass


class ParseError(SymbolicError):
    """Malformed expression text.  ``position`` is a 0-based column."""

    def __init__(self, message: str, position: int | None = None, text: str | None = None):
        self.position = position
        self.text = text
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class UnknownVariableError(ParseError):
    def __init__(self, name: str, position: int | None = None, text: str | None = None):
        self.name = name
        super().__init__(f"unknown variable {name!r}", position, text)


class AlphabetError(SymbolicError):
    pass


class EvaluationError(SymbolicError):
    """Numeric evaluation failed; ``subtree`` is the offending node."""

    def __init__(self, message: str, subtree=None):
        self.subtree = subtree
        if subtree is not None:
            from .symbolic.expr import to_string

            try:
                message = f"{message} in subexpression {to_string(subtree)}"
            except Exception:  # printing must never mask the real error
                pass
        super().__init__(message)


class MissingBindingError(EvaluationError):
    pass


class DomainError(EvaluationError):
    pass


class NonPolynomialError(SymbolicError):
    pass


class DimensionError(OCNoetherError):
    pass


class NumericError(OCNoetherError):
    pass


class QuadratureError(NumericError):
    def __init__(self, message: str, location: float | None = None):
        self.location = location
        if location is not None:
            message = f"{message} at t={location:.17g}"
        super().__init__(message)


class NewtonError(NumericError):
    pass


class ShootingError(NumericError):
    """Shooting did not produce an extremal.  ``t_fail`` is set for integrator breakdown."""

    def __init__(self, message: str, t_fail: float | None = None):
        self.t_fail = t_fail
        super().__init__(message)


class FitError(NumericError):
    pass


class FileFormatError(OCNoetherError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
