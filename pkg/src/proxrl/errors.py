"""Exception and warning types raised across the package."""


class ProxRLError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(ProxRLError, ValueError):
    pass


class NegativeRho(ProxRLError, ValueError):
    pass


class DomainViolation(ProxRLError, ValueError):
    pass


class NonPositiveDefinite(ProxRLError, ValueError):
    pass


class InfeasibleSet(ProxRLError, ValueError):
    pass


class NonConvergence(ProxRLError, RuntimeError):
    """An iterative solver hit its iteration cap.

    The last iterate is kept on ``x`` so callers can inspect it.
    """

    def __init__(self, message, x=None, iterations=None):
        super().__init__(message)
        self.x = x
        self.iterations = iterations


class StepSizeOutOfRange(ProxRLError, ValueError):
    pass


class StepSizeWarning(UserWarning):
    """Stepsize outside the range where convergence is guaranteed."""


class SingularBasis(ProxRLError, ValueError):
    pass


class EmptyHistory(ProxRLError, ValueError):
    pass


class ZeroDiagonal(ProxRLError, ValueError):
    pass


class InvalidDimensions(ProxRLError, ValueError):
    pass


class UnknownAlgorithm(ProxRLError, KeyError):
    pass


class UnknownEnvironment(ProxRLError, KeyError):
    pass


class ConfigParse(ProxRLError, ValueError):
    pass


class MismatchedMetrics(ProxRLError, ValueError):
    pass
