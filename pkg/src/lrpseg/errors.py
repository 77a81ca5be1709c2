"""Exception types shared across the package."""


class LrpsegError(Exception):
    """Base class for all domain errors raised by this package."""


class ShapeError(LrpsegError):
    """Tensor dimensions do not satisfy an operation's contract."""


class ConfigError(LrpsegError):
    """Invalid configuration: rule assignment, bounds, or training setup."""


class WeightFormatError(LrpsegError):
    """Weight container file is malformed at the byte level."""


class WeightValidationError(LrpsegError):
    """Weight container contents do not match the declared architecture."""


class DataError(LrpsegError):
    """Input data cannot support the requested computation."""


class InsufficientDataError(DataError):
    """Too few samples remain to fit a model."""


class DegenerateFitError(LrpsegError):
    """Mixture fitting collapsed and could not be recovered."""
