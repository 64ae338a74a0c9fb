"""The rate functional I(f) = inf {energy(h) : Y^h = f}.

Controls are inverted exactly where sigma does not vanish. Endpoint events
{f(T, x0) = a} are handled by a quadratic penalty on the terminal value,
minimized over h with gradients from the adjoint of the discrete skeleton
recursion (so the gradient is the derivative of what is actually solved).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy import fft, optimize

from .coefficients import CoefficientSet
from .exceptions import (
    BlowUpError,
    DomainError,
    IncompatibleTargetError,
    NonConvergenceError,
    NonInvertibleError,
    ShapeError,
)
from .grid import ControlField, Field, GridSpec, Trajectory
from .heat_kernel import apply_multiplier, forcing_multiplier, heat_multiplier
from .skeleton_solver import CONVERGENCE_WEIGHT, skeleton_scan
from .spde_solver import exponential_step
from .weights_metrics import weighted_sup_distance

__all__ = [
    "EndpointEvent",
    "OptimizerConfig",
    "EndpointObjective",
    "RateResult",
    "GradientCheckReport",
    "energy",
    "invert_control",
    "minimize_rate_endpoint",
    "finite_difference_gradient_check",
    "METHODS",
]

logger = logging.getLogger(__name__)

METHODS = ("gradient_descent", "lbfgs")
INVERSIONS = ("discrete", "centered")
MIN_STEP = 1e-16
GRADIENT_CHECK_TOL = 1e-4


class EndpointEvent(NamedTuple):
    """The event {f : f(T, x0) = a}, or {u(T, x0) > a} for probabilities."""

    x0: float
    a: float
    T: float

    @classmethod
    def parse(cls, text: str) -> "EndpointEvent":
        """Read ``"a,x0,T"``."""
        try:
            a, x0, T = (float(part) for part in text.split(","))
        except ValueError:
            raise DomainError(f"event must read 'a,x0,T', got '{text}'")
        return cls(x0=x0, a=a, T=T)

    def check(self, grid: GridSpec):
        if not np.isclose(self.T, grid.T, rtol=1e-12, atol=1e-12):
            raise DomainError(f"event time T={self.T} differs from the grid horizon {grid.T}")
        if abs(self.x0) > grid.half_width:
            raise DomainError(f"x0={self.x0} lies outside the window")


def energy(h: ControlField) -> float:
    """1/2 sum h^2 dt dx."""
    return h.energy


def invert_control(
    f: Trajectory,
    coeffs: CoefficientSet,
    u0: Field,
    method: str = "discrete",
    sigma_min: float = 1e-8,
    tol: float = 1e-6,
) -> Tuple[ControlField, float]:
    """The control h with Y^h = f, and the residual of re-solving with it.

    ``discrete`` undoes one step of the skeleton recursion through the
    inverse of the forcing smoother, so every grid trajectory is matched to
    rounding. ``centered`` evaluates (d_t f - 1/2 f_xx - b(f)) / sigma(f) by
    centered differences at the step midpoints. ``discrete`` is the default
    since it inverts the recursion the solvers run; ``centered`` is the
    finite-difference formula, exact only to discretization order and off
    near spatial jumps of the target. The residual is the
    time-weighted sup distance between Y^h and f; an unreachable target
    shows up there, never as an exception.
    """
    grid = f.grid
    if u0.grid != grid:
        raise ShapeError("target and initial datum live on different grids")
    if method not in INVERSIONS:
        raise DomainError(f"unknown inversion '{method}', choose from {INVERSIONS}")
    mismatch = float(np.max(np.abs(f.values[0] - u0.values)))
    if mismatch > tol * max(1.0, float(np.max(np.abs(u0.values)))):
        raise IncompatibleTargetError(f"target starts {mismatch:.3g} away from u0")
    if method == "discrete":
        states = f.values[:-1]
    else:
        states = 0.5 * (f.values[1:] + f.values[:-1])
    sigma = coeffs.sigma(states)
    small = np.abs(sigma) < sigma_min
    if np.any(small):
        k, j = np.argwhere(small)[0]
        raise NonInvertibleError(
            f"|sigma| < {sigma_min:g} at t={grid.times[k]:.6g}, x={grid.x[j]:.6g}"
        )
    with np.errstate(all="ignore"):
        if method == "discrete":
            free = exponential_step(grid, states, coeffs.b(states), np.zeros_like(states))
            forcing = apply_multiplier(f.values[1:] - free, 1.0 / forcing_multiplier(grid))
            values = forcing / (grid.dt * sigma)
        else:
            rate = np.diff(f.values, axis=0) / grid.dt
            laplacian = (
                np.roll(states, -1, axis=1) - 2.0 * states + np.roll(states, 1, axis=1)
            ) / grid.dx**2
            values = (rate - 0.5 * laplacian - coeffs.b(states)) / sigma
    if not np.all(np.isfinite(values)):
        raise NonInvertibleError("the inverted control is not finite")
    h = ControlField(grid, values)
    try:
        Y = skeleton_scan(coeffs, grid, u0.values, h.values)
        residual = weighted_sup_distance(Trajectory(grid, Y), f, CONVERGENCE_WEIGHT)
    except BlowUpError:
        residual = np.inf
    logger.debug("inverted control (%s): energy %.6g, residual %.3e", method, h.energy, residual)
    return h, float(residual)


class EndpointObjective:
    """energy(h) + (mu / 2) (Y^h(T, x0) - a)^2 with its adjoint gradient.

    Gradients are Riesz representers in the control inner product
    <g, v> = sum g v dt dx, so ``gradient == h`` when mu = 0. The adjoint
    runs the recursion backwards with the transposes of P_dt and S, which
    are symmetric on the periodic grid.
    """

    def __init__(
        self, coeffs: CoefficientSet, u0: Field, event: EndpointEvent, mu: float
    ):
        grid = u0.grid
        event.check(grid)
        if coeffs.b_prime is None or coeffs.sigma_prime is None:
            raise DomainError(f"'{coeffs.name}' carries no derivatives for the adjoint")
        if mu < 0:
            raise DomainError(f"penalty weight must be >= 0, got {mu}")
        self.coeffs = coeffs
        self.u0 = u0
        self.event = event
        self.mu = float(mu)
        self.grid = grid
        self.j0 = grid.index_of(event.x0)
        self._cell = grid.dt * grid.dx

    def inner(self, g, v) -> float:
        return float(np.sum(g * v)) * self._cell

    def states(self, h: np.ndarray) -> np.ndarray:
        return skeleton_scan(self.coeffs, self.grid, self.u0.values, h)

    def _value(self, h, endpoint) -> float:
        return 0.5 * self.inner(h, h) + 0.5 * self.mu * (endpoint - self.event.a) ** 2

    def value(self, h: np.ndarray) -> float:
        """The objective, or inf when the scan blows up."""
        try:
            endpoint = self.states(h)[-1, self.j0]
        except BlowUpError:
            return np.inf
        return self._value(h, endpoint)

    def value_and_gradient(self, h: np.ndarray):
        """(value, gradient, Y^h(T, x0))."""
        grid, coeffs = self.grid, self.coeffs
        Y = self.states(h)
        endpoint = float(Y[-1, self.j0])
        heat = heat_multiplier(grid, grid.dt)
        smoother = forcing_multiplier(grid)
        gradient = np.empty_like(h)
        adjoint = np.zeros(grid.n_x)
        adjoint[self.j0] = self.mu * (endpoint - self.event.a)
        for k in range(grid.n_t - 1, -1, -1):
            spectrum = fft.rfft(adjoint)
            propagated = fft.irfft(spectrum * heat, n=grid.n_x)
            smoothed = fft.irfft(spectrum * smoother, n=grid.n_x)
            y = Y[k]
            gradient[k] = h[k] + coeffs.sigma(y) * smoothed / grid.dx
            adjoint = (1.0 + grid.dt * coeffs.b_prime(y)) * propagated
            adjoint += grid.dt * coeffs.sigma_prime(y) * h[k] * smoothed
        return self._value(h, endpoint), gradient, endpoint


@dataclass
class OptimizerConfig:
    """Penalty schedule mu0 * growth^r for r < rounds and the inner solver."""

    mu0: float = 10.0
    growth: float = 10.0
    rounds: int = 5
    armijo: float = 1e-4
    inner_iterations: int = 200
    gradient_tol: float = 1e-6
    constraint_tol: float = 1e-3
    method: str = "gradient_descent"
    restarts: int = 0
    restart_scale: float = 1.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown optimizer '{self.method}', choose from {METHODS}")
        if self.mu0 <= 0 or self.growth < 1 or self.rounds < 1:
            raise DomainError("penalty schedule needs mu0 > 0, growth >= 1, rounds >= 1")
        if not 0 < self.armijo < 0.5:
            raise DomainError(f"Armijo constant must lie in (0, 1/2), got {self.armijo}")
        if self.restarts < 0:
            raise DomainError("restarts must be >= 0")

    @property
    def schedule(self) -> List[float]:
        return [self.mu0 * self.growth**r for r in range(self.rounds)]

    def as_dict(self) -> dict:
        return asdict(self)


class RateResult(NamedTuple):
    control: ControlField
    rate: float
    history: List[Dict[str, float]]


def _gradient_descent(objective: EndpointObjective, h: np.ndarray, opt: OptimizerConfig):
    """Steepest descent with Armijo backtracking by quadratic interpolation."""
    value, gradient, endpoint = objective.value_and_gradient(h)
    step = 1.0
    stalled = False
    iteration = 0
    for iteration in range(1, opt.inner_iterations + 1):
        g2 = objective.inner(gradient, gradient)
        if np.sqrt(g2) <= opt.gradient_tol * max(1.0, np.sqrt(objective.inner(h, h))):
            break
        while True:
            trial = h - step * gradient
            trial_value = objective.value(trial)
            if trial_value <= value - opt.armijo * step * g2:
                break
            if np.isfinite(trial_value):
                model = g2 * step**2 / (2.0 * (trial_value - value + g2 * step))
                step = min(max(model, 0.1 * step), 0.5 * step)
            else:
                step *= 0.1
            if step < MIN_STEP:
                stalled = True
                break
        if stalled:
            logger.debug("line search stalled at |grad| = %.3e", np.sqrt(g2))
            break
        h = trial
        value, gradient, endpoint = objective.value_and_gradient(h)
        step *= 2.0
    return h, value, gradient, endpoint, iteration, stalled


def _lbfgs(objective: EndpointObjective, h: np.ndarray, opt: OptimizerConfig):
    """L-BFGS-B in the coordinates z = h sqrt(dt dx), where the control norm is Euclidean."""
    scale = np.sqrt(objective.grid.dt * objective.grid.dx)
    shape = h.shape

    def fun(z):
        try:
            value, gradient, _ = objective.value_and_gradient(z.reshape(shape) / scale)
        except BlowUpError:
            return np.inf, np.zeros_like(z)
        return value, (gradient * scale).ravel()

    result = optimize.minimize(
        fun,
        (h * scale).ravel(),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": opt.inner_iterations, "gtol": opt.gradient_tol * scale},
    )
    h = result.x.reshape(shape) / scale
    value, gradient, endpoint = objective.value_and_gradient(h)
    return h, value, gradient, endpoint, int(result.nit), not result.success


def _penalty_rounds(coeffs, u0, event, opt: OptimizerConfig, h: np.ndarray, start: int):
    history: List[Dict[str, float]] = []
    inner = _lbfgs if opt.method == "lbfgs" else _gradient_descent
    for r, mu in enumerate(opt.schedule):
        objective = EndpointObjective(coeffs, u0, event, mu)
        h, value, gradient, endpoint, iterations, stalled = inner(objective, h, opt)
        violation = abs(endpoint - event.a)
        history.append(
            {
                "start": start,
                "round": r,
                "mu": mu,
                "iterations": iterations,
                "objective": value,
                "energy": 0.5 * objective.inner(h, h),
                "endpoint": endpoint,
                "violation": violation,
                "gradient_norm": float(np.sqrt(objective.inner(gradient, gradient))),
                "stalled": bool(stalled),
            }
        )
        logger.info(
            "start %d round %d: mu=%.3g energy=%.6g violation=%.3e",
            start, r, mu, history[-1]["energy"], violation,
        )
        if violation < opt.constraint_tol:
            break
    return h, history


def minimize_rate_endpoint(
    coeffs: CoefficientSet,
    u0: Field,
    event: EndpointEvent,
    opt: Optional[OptimizerConfig] = None,
    target: Optional[Trajectory] = None,
) -> RateResult:
    """Minimize energy(h) subject to Y^h(T, x0) = a by a penalty method.

    Restarts from random controls run concurrently and the feasible result
    of least energy wins; this is a local minimum without any claim of
    global optimality. When a ``target`` trajectory meeting the event is
    supplied, its inverted control bounds the result from above.
    """
    opt = opt or OptimizerConfig()
    grid = u0.grid
    event.check(grid)
    rng = np.random.default_rng(opt.seed)
    starts = [np.zeros((grid.n_t, grid.n_x))] + [
        opt.restart_scale * rng.standard_normal((grid.n_t, grid.n_x)) for _ in range(opt.restarts)
    ]
    with ThreadPoolExecutor(max_workers=max(1, opt.workers)) as pool:
        futures = [
            pool.submit(_penalty_rounds, coeffs, u0, event, opt, h, i)
            for i, h in enumerate(starts)
        ]
        outcomes = [future.result() for future in futures]
    history = [row for _, rows in outcomes for row in rows]
    feasible = [
        (rows[-1]["energy"], h) for h, rows in outcomes if rows[-1]["violation"] < opt.constraint_tol
    ]
    if not feasible:
        h, rows = min(outcomes, key=lambda outcome: outcome[1][-1]["violation"])
        raise NonConvergenceError(
            f"constraint violation {rows[-1]['violation']:.3e} after {opt.rounds} penalty rounds",
            residual=rows[-1]["violation"],
            best=ControlField(grid, h),
            history=history,
        )
    rate, h = min(feasible, key=lambda item: item[0])
    control = ControlField(grid, h)
    if target is not None:
        bound_control, residual = invert_control(target, coeffs, u0)
        reaches = abs(target.values[-1, grid.index_of(event.x0)] - event.a) < opt.constraint_tol
        if reaches and bound_control.energy < rate:
            logger.warning(
                "optimizer energy %.6g exceeds the inversion bound %.6g; using the target",
                rate,
                bound_control.energy,
            )
            control, rate = bound_control, bound_control.energy
    return RateResult(control, float(rate), history)


@dataclass
class GradientCheckReport:
    probes: int
    relative_errors: List[float]
    tol: float = GRADIENT_CHECK_TOL

    @property
    def max_relative_error(self) -> float:
        return max(self.relative_errors, default=0.0)

    @property
    def ok(self) -> bool:
        return self.max_relative_error < self.tol

    def as_dict(self) -> dict:
        return {
            "probes": self.probes,
            "max_relative_error": self.max_relative_error,
            "relative_errors": self.relative_errors,
            "tol": self.tol,
            "ok": self.ok,
        }


def finite_difference_gradient_check(
    h: ControlField,
    coeffs: CoefficientSet,
    u0: Field,
    event: EndpointEvent,
    probes: int = 20,
    mu: float = 10.0,
    seed: int = 0,
    step: float = 1e-5,
    tol: float = GRADIENT_CHECK_TOL,
) -> GradientCheckReport:
    """Adjoint directional derivatives against central differences.

    Directions are random with unit control norm; the difference step is
    ``step * max(1, |h|)``.
    """
    objective = EndpointObjective(coeffs, u0, event, mu)
    _, gradient, _ = objective.value_and_gradient(h.values)
    rng = np.random.default_rng(seed)
    delta = step * max(1.0, h.norm)
    errors = []
    for _ in range(probes):
        direction = rng.standard_normal(h.values.shape)
        direction /= np.sqrt(objective.inner(direction, direction))
        adjoint = objective.inner(gradient, direction)
        central = (
            objective.value(h.values + delta * direction)
            - objective.value(h.values - delta * direction)
        ) / (2.0 * delta)
        scale = max(abs(adjoint), abs(central), np.finfo(float).tiny)
        errors.append(float(abs(adjoint - central) / scale))
    report = GradientCheckReport(probes, errors, tol)
    if not report.ok:
        logger.warning("adjoint gradient off by %.3e relative", report.max_relative_error)
    return report
