"""Exception hierarchy shared across the package."""


class PixArtError(Exception):
    """Base class for all package errors."""


class ShapeError(PixArtError, ValueError):
    pass


class ContractError(PixArtError, RuntimeError):
    """A precondition of an operation was violated by the caller."""


class ConfigError(PixArtError, ValueError):
    pass


class DataError(PixArtError):
    pass


class SchedulingError(DataError):
    pass


class NumericAbort(PixArtError, FloatingPointError):
    """Training produced a non-finite value."""

    def __init__(self, message, last_good_checkpoint=None):
        super().__init__(message)
        self.last_good_checkpoint = last_good_checkpoint
