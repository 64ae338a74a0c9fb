"""Driven and controlled stochastic heat equations in mild form.

One recursion serves both equations:

    u_{k+1} = P_dt (u_k + dt b(u_k)) + S(sigma(u_k) (dt h_k + sqrt(eps) dW_k / dx))

with S the forcing smoother of ``heat_kernel.forcing_multiplier``. Setting
eps = 0 gives the skeleton recursion, h = 0 the uncontrolled equation.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import fft

from .coefficients import CoefficientSet, Regime, builtin
from .exceptions import BlowUpError, DomainError, ShapeError, UnstableStepError
from .grid import ControlField, Field, GridSpec, Trajectory
from .heat_kernel import forcing_multiplier, heat_multiplier
from .noise import NoiseRealization, NoiseStream
from .weights_metrics import WeightParams, time_weighted_sup

__all__ = [
    "SolveConfig",
    "EnsembleResult",
    "ExplosionTable",
    "exponential_step",
    "solve_spde",
    "simulate_ensemble",
    "explosion_demo",
    "BLOW_UP_LEVEL",
    "BATCH_SIZE",
]

logger = logging.getLogger(__name__)

BLOW_UP_LEVEL = 1e8
BATCH_SIZE = 1000
STABILITY_MARGIN = 0.5


@dataclass
class SolveConfig:
    coeffs: CoefficientSet
    u0: Field
    eps: float = 0.0
    control: Optional[ControlField] = None
    seed: int = 0
    stream: int = 0
    noise: Optional[NoiseRealization] = None

    def __post_init__(self):
        if self.eps < 0:
            raise DomainError(f"noise intensity must be >= 0, got eps={self.eps}")
        if self.control is not None and self.control.grid != self.grid:
            raise ShapeError("control and initial datum live on different grids")
        if self.noise is not None and self.noise.grid != self.grid:
            raise ShapeError("noise and initial datum live on different grids")

    @property
    def grid(self) -> GridSpec:
        return self.u0.grid

    def as_dict(self) -> dict:
        return {
            "coeff": self.coeffs.name,
            "eps": self.eps,
            "grid": self.grid.as_dict(),
            "seed": self.seed,
            "stream": self.stream,
            "control_energy": None if self.control is None else self.control.energy,
        }


def exponential_step(grid: GridSpec, u, drift, forcing):
    """P_dt (u + dt drift) + S forcing, along the last axis."""
    heat = heat_multiplier(grid, grid.dt)
    smoother = forcing_multiplier(grid)
    spectrum = fft.rfft(u + grid.dt * drift, axis=-1) * heat
    spectrum += fft.rfft(forcing, axis=-1) * smoother
    return fft.irfft(spectrum, n=grid.n_x, axis=-1)


def _check_stability(coeffs: CoefficientSet, grid: GridSpec):
    if coeffs.regime is Regime.H0_LIPSCHITZ:
        margin = grid.dt * coeffs.constants["L"]
        if margin >= STABILITY_MARGIN:
            raise UnstableStepError(
                f"dt * L = {margin:.3g} for '{coeffs.name}' exceeds {STABILITY_MARGIN}; "
                "refine the time grid"
            )
        logger.debug("explicit drift step margin dt * L = %.3g", margin)


def _check_finite(grid: GridSpec, u: np.ndarray, k: int):
    bad = ~np.isfinite(u) | (np.abs(u) > BLOW_UP_LEVEL)
    if np.any(bad):
        index = np.argwhere(bad)[0]
        point = (float(grid.times[k]), float(grid.x[index[-1]]))
        raise BlowUpError(
            f"solution left the finite range at t={point[0]:.6g}, x={point[1]:.6g}",
            point=point,
            time_index=k,
        )


def _run(
    cfg: SolveConfig, u: np.ndarray, draw, log_weights=None, keep: bool = True
) -> List[np.ndarray]:
    """March the recursion; ``draw(k)`` returns the step-k increments.

    Returns every state starting from ``u``, or only the last one unless
    ``keep``. ``log_weights`` accumulates the likelihood ratio of the control
    read as a Girsanov tilt.
    """
    grid, coeffs = cfg.grid, cfg.coeffs
    _check_stability(coeffs, grid)
    root_eps = np.sqrt(cfg.eps)
    states = [u]
    for k in range(grid.n_t):
        h_k = 0.0 if cfg.control is None else cfg.control.values[k]
        kick = grid.dt * h_k
        increments = draw(k) if cfg.eps > 0 else None
        if increments is not None:
            kick = kick + root_eps * increments / grid.dx
            if log_weights is not None and cfg.control is not None:
                log_weights -= increments @ cfg.control.values[k] / root_eps
        with np.errstate(all="ignore"):
            u = exponential_step(grid, u, coeffs.b(u), coeffs.sigma(u) * kick)
        _check_finite(grid, u, k + 1)
        if keep:
            states.append(u)
        else:
            states[-1] = u
    if log_weights is not None and cfg.control is not None:
        log_weights -= cfg.control.energy / cfg.eps
    return states


def _default_weight(coeffs: CoefficientSet) -> WeightParams:
    if coeffs.regime is Regime.H1_LOG_LIPSCHITZ:
        return WeightParams(lam=1.0, kappa=max(coeffs.constants["c1"], coeffs.constants["c4"]))
    return WeightParams.lipschitz(1.0)


def solve_spde(cfg: SolveConfig) -> Trajectory:
    """One trajectory of the (controlled) equation on the grid."""
    grid = cfg.grid
    noise = cfg.noise
    if cfg.eps > 0 and noise is None:
        stream = NoiseStream(grid, cfg.seed, cfg.stream)
        states = _run(cfg, cfg.u0.values, lambda k: stream.increments(k, 0, 1)[0])
    else:
        states = _run(cfg, cfg.u0.values, lambda k: noise.increments[k])
    trajectory = Trajectory(grid, np.vstack(states), {"config": cfg.as_dict()})
    weight = _default_weight(cfg.coeffs)
    trajectory.metadata["weighted_sup"] = time_weighted_sup(trajectory, weight)
    trajectory.metadata["weight"] = {"lambda": weight.lam, "beta": weight.beta}
    return trajectory


@dataclass
class EnsembleResult:
    """Reductions of an ensemble; trajectories themselves are not stored.

    ``endpoints[j]`` is u_j(T, x_probe). ``window_sups[j, i]`` is
    sup_{|x| <= windows[i]} |u_j(T, x)|. ``log_weights`` holds the
    likelihood ratio of the control when the ensemble runs under a tilt.
    """

    grid: GridSpec
    endpoints: np.ndarray
    x_probe: float = 0.0
    windows: Sequence[float] = ()
    window_sups: Optional[np.ndarray] = None
    log_weights: Optional[np.ndarray] = None
    config: dict = field(default_factory=dict)

    @property
    def samples(self) -> int:
        return len(self.endpoints)


def _run_batch(cfg: SolveConfig, stream: NoiseStream, batch, size, probe, windows, tilt):
    u0 = np.broadcast_to(cfg.u0.values, (size, cfg.grid.n_x)).copy()
    log_weights = np.zeros(size) if tilt else None
    draw = lambda k: stream.increments(k, batch, size)  # noqa: E731
    final = _run(cfg, u0, draw, log_weights, keep=False)[-1]
    sups = None
    if windows:
        masks = [np.abs(cfg.grid.x) <= window for window in windows]
        sups = np.stack([np.max(np.abs(final[:, m]), axis=1) for m in masks], axis=1)
    return final[:, probe], sups, log_weights


def simulate_ensemble(
    cfg: SolveConfig,
    samples: int,
    workers: int = 1,
    x_probe: float = 0.0,
    windows: Sequence[float] = (),
    tilt: bool = False,
    batch_size: int = BATCH_SIZE,
) -> EnsembleResult:
    """Independent trajectories of ``cfg`` in batches of ``batch_size``.

    Batch b draws its noise from stream ``cfg.stream + b``, so the result is
    the same for any number of ``workers``. With ``tilt`` the control is
    read as a change of measure and each sample carries its log likelihood
    ratio.
    """
    if samples <= 0:
        raise DomainError(f"need samples > 0, got {samples}")
    if tilt and (cfg.control is None or cfg.eps <= 0):
        raise DomainError("a tilted ensemble needs a control and eps > 0")
    grid = cfg.grid
    probe = grid.index_of(x_probe)
    stream = NoiseStream(grid, cfg.seed, cfg.stream)
    sizes = [batch_size] * (samples // batch_size)
    if samples % batch_size:
        sizes.append(samples % batch_size)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [
            pool.submit(_run_batch, cfg, stream, b, size, probe, windows, tilt)
            for b, size in enumerate(sizes)
        ]
        parts = [future.result() for future in futures]
    logger.debug("ensemble of %d samples in %d batches", samples, len(sizes))
    return EnsembleResult(
        grid=grid,
        endpoints=np.concatenate([p[0] for p in parts]),
        x_probe=float(grid.x[probe]),
        windows=tuple(windows),
        window_sups=np.concatenate([p[1] for p in parts]) if windows else None,
        log_weights=np.concatenate([p[2] for p in parts]) if tilt else None,
        config=cfg.as_dict(),
    )


@dataclass
class ExplosionTable:
    t: float
    windows: List[float]
    means: List[float]
    stderrs: List[float]
    exponent: float
    single_point_mean: float
    samples: int

    @property
    def increasing(self) -> bool:
        return all(b > a for a, b in zip(self.means[:-1], self.means[1:]))

    @property
    def consistent(self) -> bool:
        """Growth like sqrt(log Lambda): fitted exponent within 20% of 1/2."""
        return self.increasing and abs(self.exponent - 0.5) <= 0.1

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "rows": [
                {"window": w, "mean": m, "stderr": s}
                for w, m, s in zip(self.windows, self.means, self.stderrs)
            ],
            "exponent": self.exponent,
            "single_point_mean": self.single_point_mean,
            "samples": self.samples,
            "increasing": self.increasing,
            "consistent": self.consistent,
        }


def explosion_demo(
    t: float = 1.0,
    lambda_list: Sequence[float] = (4, 8, 16, 32, 64),
    samples: int = 200,
    seed: int = 0,
    workers: int = 1,
    dx: float = 0.25,
    dt: float = 0.01,
) -> ExplosionTable:
    """E[sup_{|x| <= Lambda} |u(t, x)|] for b = 0, sigma = 1, u0 = 0.

    The solution at time t is a stationary Gaussian field, so the windowed
    supremum grows like sqrt(2 Var log Lambda); the exponent is the slope
    of log mean against log log Lambda.
    """
    windows = sorted(float(w) for w in lambda_list)
    if windows[0] <= 1:
        raise DomainError("windows must exceed 1 for the log log fit")
    half_width = 2.0 * windows[-1]
    n_x = int(round(2.0 * half_width / dx))
    n_x += n_x % 2
    grid = GridSpec(T=t, n_t=max(1, int(round(t / dt))), half_width=half_width, n_x=n_x)
    cfg = SolveConfig(builtin("zero_drift_unit_sigma"), Field.zeros(grid), eps=1.0, seed=seed)
    result = simulate_ensemble(cfg, samples, workers=workers, windows=windows)
    means = result.window_sups.mean(axis=0)
    stderrs = result.window_sups.std(axis=0, ddof=1) / np.sqrt(samples)
    exponent = float(np.polyfit(np.log(np.log(windows)), np.log(means), 1)[0])
    table = ExplosionTable(
        t=t,
        windows=windows,
        means=[float(m) for m in means],
        stderrs=[float(s) for s in stderrs],
        exponent=exponent,
        single_point_mean=float(np.sqrt(2.0 * np.sqrt(t / np.pi) / np.pi)),
        samples=samples,
    )
    if not table.consistent:
        logger.warning("windowed sup growth exponent %.3f is not close to 1/2", exponent)
    return table
