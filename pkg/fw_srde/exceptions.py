from typing import Optional, Tuple

__all__ = [
    "FWError",
    "DomainError",
    "ShapeError",
    "NumericalError",
    "BlowUpError",
    "NonConvergenceError",
    "NonInvertibleError",
    "IncompatibleTargetError",
    "UnstableStepError",
    "UnknownCoefficientError",
]


class FWError(Exception):
    """Base class of all errors raised by fw_srde."""

    exit_code = 1


class DomainError(FWError, ValueError):
    """A precondition of an operation is violated."""


class ShapeError(DomainError):
    """Fields or trajectories live on different grids."""


class NonInvertibleError(DomainError):
    """sigma vanishes (numerically) on the range of a target trajectory."""


class IncompatibleTargetError(DomainError):
    """A target trajectory does not start at the prescribed initial datum."""


class UnstableStepError(DomainError):
    """The explicit drift step violates dt * Lip(b) < 0.5 on the observed range."""


class UnknownCoefficientError(DomainError, LookupError):
    """A coefficient set name is not in the catalog."""


class NumericalError(FWError):
    def __init__(self, message, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BlowUpError(NumericalError):
    """A trajectory left the finite range; carries the first bad (t, x)."""

    def __init__(self, message, point: Tuple[float, float], time_index: int):
        super().__init__(message, {"t": point[0], "x": point[1]})
        self.point = point
        self.time_index = time_index


class NonConvergenceError(FWError):
    """An iteration stopped before reaching its tolerance."""

    exit_code = 2

    def __init__(self, message, residual=None, best=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.best = best
        self.history = history or []
