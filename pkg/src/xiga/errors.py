"""Exception types raised across the package."""


class XigaError(Exception):
    """Base class for package errors."""


class PreconditionError(XigaError, ValueError):
    """An operation was called on data that violates its precondition."""


class RegularityError(XigaError):
    """A refined mesh does not satisfy the buffer-zone rule needed by a basis."""


class GeometryResolutionError(XigaError):
    """A level set changes sign more than once on a cell edge."""


class SequencingError(XigaError, RuntimeError):
    """A pipeline stage ran before the data it needs was available."""


class SingularSystemError(XigaError, RuntimeError):
    """The sparse factorization broke down."""


class ConfigError(XigaError, ValueError):
    """A study configuration failed validation."""
