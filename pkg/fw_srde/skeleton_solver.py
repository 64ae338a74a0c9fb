"""The skeleton equation

    Y(t) = P_t u0 + int_0^t P_{t-s} [b(Y(s)) + sigma(Y(s)) h(s)] ds

solved by Picard iteration of its mild map, directly for Lipschitz
coefficients and through the mollified sequence (b_n, sigma_n) for
log-Lipschitz drifts.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .coefficients import CoefficientSet, Regime
from .exceptions import BlowUpError, DomainError, NonConvergenceError, ShapeError
from .grid import ControlField, Field, GridSpec, Trajectory, integrate_cells
from .heat_kernel import apply_multiplier, heat_multiplier
from .spde_solver import BLOW_UP_LEVEL, exponential_step
from .weights_metrics import WeightParams, time_weighted_sup, weighted_sup_distance

__all__ = [
    "int_map",
    "mild_map",
    "solve_skeleton",
    "solve_skeleton_lipschitz",
    "solve_skeleton_mollified",
    "solve_skeleton_scan",
    "skeleton_scan",
    "MollifiedSolution",
    "uniqueness_probe",
    "UniquenessReport",
    "uniform_bound_diagnostic",
    "UniformBoundReport",
    "DEFAULT_SCHEDULE",
]

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
DEFAULT_SCHEDULE = (8, 16, 32, 64, 128)
DEFAULT_GAP_TOL = 1e-3
CONVERGENCE_WEIGHT = WeightParams.lipschitz(1.0)

Init = Union[str, Trajectory]


def int_map(h: ControlField) -> Trajectory:
    """Int(h)(t, x) = int_0^t int_0^x h(s, y) dy ds on the grid nodes."""
    grid = h.grid
    return Trajectory(grid, integrate_cells(grid, h.values * grid.dt * grid.dx))


def _control_values(grid: GridSpec, h: Optional[ControlField]) -> np.ndarray:
    if h is None:
        return np.zeros((grid.n_t, grid.n_x))
    if h.grid != grid:
        raise ShapeError("control and initial datum live on different grids")
    return h.values


def mild_map(
    coeffs: CoefficientSet, u0: Field, h: Optional[ControlField], Y: Trajectory
) -> Trajectory:
    """One application of the mild map to the trajectory Y.

    Evaluated by the causal scan
    A_{k+1} = P_dt (A_k + dt b(Y_k)) + S(dt sigma(Y_k) h_k), A_0 = u0,
    with the coefficients frozen along Y.
    """
    grid = u0.grid
    if Y.grid != grid:
        raise ShapeError("iterate and initial datum live on different grids")
    controls = _control_values(grid, h)
    values = np.empty((grid.n_t + 1, grid.n_x))
    values[0] = u0.values
    with np.errstate(all="ignore"):
        for k in range(grid.n_t):
            y = Y.values[k]
            values[k + 1] = exponential_step(
                grid, values[k], coeffs.b(y), grid.dt * coeffs.sigma(y) * controls[k]
            )
    _check_range(grid, values, "mild map")
    return Trajectory(grid, values)


def _check_range(grid: GridSpec, values: np.ndarray, what: str):
    bad = ~np.isfinite(values) | (np.abs(values) > BLOW_UP_LEVEL)
    if np.any(bad):
        k, j = np.argwhere(bad)[0]
        raise BlowUpError(
            f"{what} left the finite range",
            point=(float(grid.times[k]), float(grid.x[j])),
            time_index=int(k),
        )


def skeleton_scan(coeffs: CoefficientSet, grid: GridSpec, u0_values, controls) -> np.ndarray:
    """Y_{k+1} = P_dt (Y_k + dt b(Y_k)) + S(dt sigma(Y_k) h_k), row by row.

    The scan evaluates the coefficients at the state it has just produced,
    so its output is the fixed point of ``mild_map`` without iterating.
    """
    values = np.empty((grid.n_t + 1, grid.n_x))
    values[0] = u0_values
    with np.errstate(all="ignore"):
        for k in range(grid.n_t):
            y = values[k]
            values[k + 1] = exponential_step(
                grid, y, coeffs.b(y), coeffs.sigma(y) * (grid.dt * controls[k])
            )
    _check_range(grid, values, "skeleton scan")
    return values


def solve_skeleton_scan(
    coeffs: CoefficientSet, u0: Field, h: Optional[ControlField] = None
) -> Trajectory:
    """The skeleton solution in one causal pass, for any regime."""
    grid = u0.grid
    values = skeleton_scan(coeffs, grid, u0.values, _control_values(grid, h))
    return Trajectory(grid, values, {"iterations": 1, "residual": 0.0, "init": "scan"})


def solve_skeleton(
    coeffs: CoefficientSet,
    u0: Field,
    h: Optional[ControlField] = None,
    n: int = DEFAULT_SCHEDULE[-1],
) -> Trajectory:
    """The skeleton solution in the regime of ``coeffs``.

    Lipschitz sets are solved as given. Log-Lipschitz sets are replaced by
    their mollification (b_n, sigma_n), and ``metadata["mollified"]``
    records n. Either way the result is the fixed point of ``mild_map`` for
    the coefficients actually used, computed in one causal pass.
    """
    if coeffs.regime is Regime.H0_LIPSCHITZ:
        return solve_skeleton_scan(coeffs, u0, h)
    Y = solve_skeleton_scan(coeffs.mollified(n), u0, h)
    Y.metadata["mollified"] = int(n)
    return Y


def _initial_iterate(init: Init, u0: Field, seed: int) -> Trajectory:
    grid = u0.grid
    if isinstance(init, Trajectory):
        return init
    if init == "zero":
        return Trajectory(grid, np.zeros((grid.n_t + 1, grid.n_x)))
    if init == "heat":
        values = [u0.values]
        multiplier = heat_multiplier(grid, grid.dt)
        for _ in range(grid.n_t):
            values.append(apply_multiplier(values[-1], multiplier))
        return Trajectory(grid, np.vstack(values))
    if init == "random":
        rng = np.random.default_rng(seed)
        return Trajectory(grid, rng.uniform(-1.0, 1.0, (grid.n_t + 1, grid.n_x)))
    raise DomainError(f"unknown Picard initialization '{init}'")


def solve_skeleton_lipschitz(
    coeffs: CoefficientSet,
    u0: Field,
    h: Optional[ControlField] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: Init = "heat",
    seed: int = 0,
    locally_lipschitz: bool = False,
) -> Trajectory:
    """Picard iteration Y <- mild_map(Y) until successive iterates differ by < tol.

    Distances are time_weighted_sup at lambda = 1. Log-Lipschitz drifts are
    only accepted when the caller asserts ``locally_lipschitz`` on the range
    the solution visits.
    """
    if coeffs.regime is not Regime.H0_LIPSCHITZ and not locally_lipschitz:
        raise DomainError(
            f"'{coeffs.name}' is not globally Lipschitz; use the mollified solver"
        )
    Y = _initial_iterate(init, u0, seed)
    history: List[float] = []
    for iteration in range(1, max_iter + 1):
        update = mild_map(coeffs, u0, h, Y)
        residual = weighted_sup_distance(update, Y, CONVERGENCE_WEIGHT)
        history.append(residual)
        Y = update
        logger.debug("Picard iteration %d: residual %.3e", iteration, residual)
        if residual < tol:
            Y.metadata.update(iterations=iteration, residual=residual, init=str(init))
            return Y
    raise NonConvergenceError(
        f"Picard iteration did not reach {tol:.1e} in {max_iter} iterations",
        residual=history[-1],
        best=Y,
        history=history,
    )


@dataclass
class MollifiedSolution:
    """The last mollified solution and the table of successive gaps."""

    trajectory: Trajectory
    table: List[Dict[str, float]]
    converged: bool
    tol: float

    def as_dict(self) -> dict:
        return {"table": self.table, "converged": self.converged, "tol": self.tol}


def solve_skeleton_mollified(
    coeffs: CoefficientSet,
    u0: Field,
    h: Optional[ControlField] = None,
    n_schedule: Sequence[int] = DEFAULT_SCHEDULE,
    tol: float = DEFAULT_GAP_TOL,
    picard_tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> MollifiedSolution:
    """Solve with (b_n, sigma_n) for every n in the schedule.

    Converged when the last gap is below ``tol`` and no larger than the one
    before it; otherwise the table is still returned, with a warning.
    """
    table = []
    previous: Optional[Trajectory] = None
    for n in n_schedule:
        approximation = coeffs.mollified(n)
        Y = solve_skeleton_lipschitz(
            approximation, u0, h, tol=picard_tol, max_iter=max_iter
        )
        gap = (
            np.nan if previous is None else weighted_sup_distance(Y, previous, CONVERGENCE_WEIGHT)
        )
        table.append(
            {
                "n": int(n),
                "L_n": approximation.constants["L"],
                "iterations": Y.metadata["iterations"],
                "gap": float(gap),
            }
        )
        logger.info("mollified skeleton n=%d: gap %.3e", n, gap)
        previous = Y
    gaps = [row["gap"] for row in table[1:]]
    converged = bool(gaps) and gaps[-1] < tol and (len(gaps) < 2 or gaps[-1] <= gaps[-2])
    if not converged:
        logger.warning("mollified skeleton gaps %s did not settle below %.1e", gaps, tol)
    previous.metadata["schedule"] = table
    return MollifiedSolution(previous, table, converged, tol)


@dataclass
class UniquenessReport:
    inits: List[str]
    distances: Dict[str, float]
    max_distance: float
    tol: float

    @property
    def agree(self) -> bool:
        return self.max_distance <= 10.0 * self.tol

    def as_dict(self) -> dict:
        return {
            "inits": self.inits,
            "distances": self.distances,
            "max_distance": self.max_distance,
            "tol": self.tol,
            "agree": self.agree,
        }


def uniqueness_probe(
    coeffs: CoefficientSet,
    u0: Field,
    h: Optional[ControlField] = None,
    perturbations: Sequence[Init] = ("zero", "heat", "random"),
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> UniquenessReport:
    """Re-solve from several Picard initializations and compare the fixed points."""
    solutions = [
        solve_skeleton_lipschitz(
            coeffs,
            u0,
            h,
            tol=tol,
            max_iter=max_iter,
            init=init,
            seed=seed,
            locally_lipschitz=True,
        )
        for init in perturbations
    ]
    names = [
        init if isinstance(init, str) else f"custom{i}" for i, init in enumerate(perturbations)
    ]
    distances = {
        f"{names[i]}/{names[j]}": weighted_sup_distance(
            solutions[i], solutions[j], CONVERGENCE_WEIGHT
        )
        for i in range(len(solutions))
        for j in range(i + 1, len(solutions))
    }
    report = UniquenessReport(names, distances, max(distances.values(), default=0.0), tol)
    if not report.agree:
        logger.warning(
            "fixed points from %s disagree by %.3e; the grid may be too coarse",
            names,
            report.max_distance,
        )
    return report


@dataclass
class UniformBoundReport:
    lam: float
    beta: float
    norms: Dict[int, float]
    time_exponent: float
    space_exponent: float
    extra: dict = field(default_factory=dict)

    @property
    def max_norm(self) -> float:
        return max(self.norms.values())

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.max_norm))

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "beta": self.beta,
            "norms": {str(n): v for n, v in self.norms.items()},
            "max_norm": self.max_norm,
            "bounded": self.bounded,
            "time_exponent": self.time_exponent,
            "space_exponent": self.space_exponent,
        }


def _control_term(coeffs: CoefficientSet, Y: Trajectory, h: Optional[ControlField]):
    """V(t) = int_0^t P_{t-s} sigma(Y(s)) h(s) ds along Y."""
    grid = Y.grid
    controls = _control_values(grid, h)
    values = np.zeros((grid.n_t + 1, grid.n_x))
    for k in range(grid.n_t):
        values[k + 1] = exponential_step(
            grid, values[k], 0.0, grid.dt * coeffs.sigma(Y.values[k]) * controls[k]
        )
    return values


def _holder_exponent(values: np.ndarray, axis: int, spacing: float, lags=(1, 2, 4, 8, 16)):
    """Slope of log max |increment| against log lag."""
    size = values.shape[axis]
    lags = [lag for lag in lags if lag < size]
    increments = []
    for lag in lags:
        shifted = np.take(values, np.arange(lag, size), axis=axis)
        base = np.take(values, np.arange(0, size - lag), axis=axis)
        increments.append(np.max(np.abs(shifted - base)))
    increments = np.asarray(increments)
    if len(lags) < 2 or np.any(increments <= 0):
        return np.nan
    return float(np.polyfit(np.log(np.asarray(lags) * spacing), np.log(increments), 1)[0])


def uniform_bound_diagnostic(
    coeffs: CoefficientSet,
    u0: Field,
    h: Optional[ControlField] = None,
    lam: float = 1.0,
    n_schedule: Sequence[int] = DEFAULT_SCHEDULE,
    window: float = 1.0,
) -> UniformBoundReport:
    """time_weighted_sup of every Y^n with beta = beta(c1, lambda), plus
    Hoelder exponents of the control term of the last Y^n on |x| <= window."""
    if coeffs.regime is not Regime.H1_LOG_LIPSCHITZ:
        raise DomainError("the uniform bound diagnostic is for log-Lipschitz drifts")
    weight = WeightParams(lam=lam, kappa=coeffs.constants["c1"])
    norms = {}
    for n in n_schedule:
        approximation = coeffs.mollified(n)
        Y = solve_skeleton_lipschitz(approximation, u0, h)
        norms[int(n)] = time_weighted_sup(Y, weight)
    grid = u0.grid
    V = _control_term(approximation, Y, h)
    central = np.abs(grid.x) <= window
    report = UniformBoundReport(
        lam=lam,
        beta=weight.beta,
        norms=norms,
        time_exponent=_holder_exponent(V[:, central], 0, grid.dt),
        space_exponent=_holder_exponent(V[1:, central], 1, grid.dx),
    )
    logger.info("uniform bound diagnostic: %s", report.as_dict())
    return report
