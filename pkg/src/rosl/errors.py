"""Exception types raised across the package."""


class RoslError(Exception):
    """Base class for all errors raised by :mod:`rosl`."""


class DimensionError(RoslError, ValueError):
    """Operands do not live in the same space."""


class GramError(RoslError, ValueError):
    """A Gram matrix is not symmetric positive definite or is too ill-conditioned."""


class MetricMismatchError(RoslError, ValueError):
    """A ball was queried in a metric other than the one it was defined in."""


class PreconditionError(RoslError, ValueError):
    """A hypothesis of an algorithm is violated (e.g. ``kappa >= 1``)."""


class ConstraintError(PreconditionError):
    """The constants ``l_V``, ``l_H`` do not define an inner product."""


class ConvergenceError(RoslError, RuntimeError):
    """An iterative method stopped without meeting its tolerance.

    Attributes
    ----------
    last : float
        The last value of the monitored quantity (gap, step length or
        objective decrease, depending on the method).
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, last=float("nan"), iterations=0):
        super().__init__(message)
        self.last = last
        self.iterations = iterations


class ProjectionError(ConvergenceError):
    """An iterative metric projection did not converge."""


class InnerSolverError(ConvergenceError):
    """The proximal-gradient inner solve of an elliptic step did not converge."""


class DivergenceError(RoslError):
    """The outer residual increased for too many consecutive steps.

    The partial :class:`~rosl.solver.SolveReport` is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
