"""Exception hierarchy shared by every module.

The CLI maps :class:`UsageError` (and its subclasses) to exit code 2 and
:class:`NumericalError` (and its subclasses) to exit code 3.
"""


class SFBMError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(SFBMError, ValueError):
    """Invalid arguments or inconsistent inputs."""


class DomainError(UsageError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(UsageError):
    """Numerical settings cannot deliver the requested accuracy."""


class NumericalError(SFBMError, ArithmeticError):
    """A computation failed or produced an inconsistent result."""


class ConvergenceError(NumericalError):
    """Adaptive quadrature did not reach its tolerance.

    Carries the best available estimate so callers can still inspect it.
    """

    def __init__(self, message, best_estimate=None, err_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.err_estimate = err_estimate


class NotPSDError(NumericalError):
    """A covariance matrix could not be factored within the jitter cap."""


class BranchCutError(NumericalError):
    """A contour integrand crossed the branch cut of its principal power."""


class IntegrityError(NumericalError):
    """A cached or serialized artifact failed validation."""


class ConsistencyError(NumericalError):
    """An internal identity (e.g. reality of a synthesized field) was violated."""
