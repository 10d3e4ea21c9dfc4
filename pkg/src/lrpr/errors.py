"""Exception and warning types raised across the package."""


class LRPRError(Exception):
    """Base class for all package errors."""


class DimensionError(LRPRError, ValueError):
    pass


class ParameterError(LRPRError, ValueError):
    pass


class ValidationError(LRPRError, ValueError):
    pass


class UnsupportedFieldError(LRPRError, ValueError):
    pass


class ConditioningError(LRPRError, ArithmeticError):
    """Sensing matrix is numerically rank deficient."""


class RankCollapseError(LRPRError, ArithmeticError):
    """A factor lost full rank during QR normalization."""


class NoRankDetectedError(LRPRError):
    """Rank estimation found no eigenvalue gap above the threshold."""


class DegenerateDataError(LRPRError):
    pass


class UnderdeterminedError(LRPRError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    """An inner iterative solve stopped before reaching its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateWarning(UserWarning):
    pass
