"""Exception types raised across the package."""


class KoopTrafficError(Exception):
    """Base class for all package errors."""


class ValidationError(KoopTrafficError, ValueError):
    """Input data or parameters violate a documented precondition."""


class DimensionError(ValidationError):
    """Matrix or vector shapes are incompatible."""


class RankZeroError(KoopTrafficError):
    """A data matrix has no singular value above the truncation threshold."""


class StructureUnavailableError(KoopTrafficError):
    """The full operator was not materialized for this model."""


class NoOscillationError(KoopTrafficError):
    """The fitted spectrum has no eigenvalue with nonzero imaginary part."""


class InsufficientDataError(KoopTrafficError):
    """Not enough samples or movement angles to carry out an estimate."""


class NoEstimateError(KoopTrafficError):
    """Every analysis window was rejected."""
