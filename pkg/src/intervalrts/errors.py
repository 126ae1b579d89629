"""Exception types shared across the package."""


class IntervalRTSError(Exception):
    """Base class for all library errors."""


class DomainError(IntervalRTSError, ValueError):
    """A point was evaluated outside the map's domain."""


class AmbiguityError(IntervalRTSError, ValueError):
    """A point sits on a branch boundary where the requested quantity is multivalued."""


class CriticalOrbitError(IntervalRTSError, ArithmeticError):
    """An orbit landed (numerically) on a critical point and log|Df| diverged."""


class MalformedMapError(IntervalRTSError, ValueError):
    """Branch data violates the piecewise-monotone map invariants."""


class TowerConstructionError(IntervalRTSError):
    """Domain identification produced an inconsistent tower."""


class TruncationError(IntervalRTSError):
    """A lifted orbit left the built (truncated) part of the tower."""


class SchemeError(IntervalRTSError, ValueError):
    """Invalid inducing-scheme or neighbourhood parameters."""


class ConvergenceError(IntervalRTSError):
    """An iterative solver did not reach its tolerance.

    ``trace`` holds the residual history so callers can inspect stagnation.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class EstimationError(IntervalRTSError):
    """A statistical estimator could not produce a value (e.g. no visits)."""
