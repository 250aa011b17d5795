"""Shared exception types for the scheduler and simulator."""


class GShareError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GShareError):
    """An input value or call violates a documented constraint."""


class ParseError(GShareError):
    """A profile or scenario file could not be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ConflictError(GShareError):
    """Duplicate registration, duplicate record, or inconsistent metadata."""


class MissingConfigurationError(GShareError):
    """Lookup of an operating point or model spec that was never recorded."""


class InvariantError(GShareError):
    """A runtime invariant was breached; indicates corrupt scheduler state."""
