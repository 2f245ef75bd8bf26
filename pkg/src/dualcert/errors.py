"""Exception types raised across the package."""


class DualCertError(Exception):
    """Base class for all package errors."""


class InputError(DualCertError, ValueError):
    """Malformed problem data (bad shapes, non-symmetric matrices, ...)."""


class ConfigError(DualCertError, ValueError):
    """Invalid method or step-size configuration."""


class UnsupportedProblem(DualCertError):
    """The requested operation does not apply to this problem class."""


class OracleFailure(DualCertError, RuntimeError):
    """The inner Lagrangian solver did not reach its tolerance.

    Carries the best iterate found and its optimality residual so callers
    can decide whether to accept it.
    """

    def __init__(self, message, best_x=None, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.best_x = best_x
        self.residual = residual
        self.iterations = iterations


class MethodFailure(DualCertError, RuntimeError):
    """A dual method stopped early; ``trace`` holds the partial run."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ReferenceInconsistency(DualCertError, ValueError):
    """Measured data contradicts the reference solution (e.g. d(u) > d*)."""


class BudgetExhausted(DualCertError, RuntimeError):
    """Reference solve ran out of iterations before reaching tolerance."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
