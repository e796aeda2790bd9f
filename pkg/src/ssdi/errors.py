"""Shared exception types.

Callers distinguish bad shapes from bad values from bad runs; everything
else stays a plain ValueError/RuntimeError.
"""


class DimensionError(ValueError):
    """Array shapes are incompatible with the operation."""


class DomainError(ValueError):
    """A value is outside the mathematically valid range."""


class EvaluationError(RuntimeError):
    """A metric or evaluation was requested on an empty or invalid set."""


class DegenerateBatchError(RuntimeError):
    """A training batch has no target entries to learn from."""


class ParseError(ValueError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ValueError):
    """Data does not match the declared schema (columns, lengths)."""


class ConfigError(ValueError):
    """A configuration key is unknown or its value is invalid."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss or gradient."""
