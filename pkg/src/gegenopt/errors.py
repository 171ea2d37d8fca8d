class GegenoptError(Exception):
    """Base class for all package errors."""


class DomainError(GegenoptError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericError(GegenoptError, ArithmeticError):
    """A numerical procedure failed to converge or produced non-finite values."""


class ConfigurationError(GegenoptError):
    """Invalid run configuration, unknown problem or unknown solver."""


class CallbackError(GegenoptError):
    """A user callback raised while being evaluated at a transcription node."""
