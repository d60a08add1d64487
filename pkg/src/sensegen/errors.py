"""Exception hierarchy shared by every sensegen module."""


class SenseGenError(Exception):
    """Base class for all library errors."""


class DimensionError(SenseGenError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(SenseGenError, ValueError):
    """A precondition of an operation was violated."""


class ConfigError(SenseGenError, ValueError):
    """Invalid model, training or run configuration."""


class DomainError(SenseGenError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class NonFiniteError(SenseGenError, ArithmeticError):
    """An operation produced NaN or infinite values."""


class ParseError(SenseGenError, ValueError):
    """Malformed input data file."""


class FormatError(SenseGenError, ValueError):
    """Malformed checkpoint file."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(FormatError):
    """Checkpoint written by an unknown format version."""
