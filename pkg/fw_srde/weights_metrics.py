"""Tempered norms, the metrics on C_tem and C([0,T], C_tem), and the weights
exp(-lambda |x| e^{beta t}) with their admissible horizon T*."""
import logging
from dataclasses import dataclass
from typing import List, NamedTuple

import numpy as np

from .checks.base import InequalityReport
from .exceptions import DomainError, ShapeError
from .grid import Field, GridSpec, Trajectory

__all__ = [
    "WeightParams",
    "MetricValue",
    "beta",
    "t_star",
    "log_plus",
    "tem_norm",
    "tem_metric",
    "path_metric",
    "time_weighted_sup",
    "weighted_sup_distance",
    "metric_axioms_report",
    "t_star_root_report",
    "DEFAULT_N_TERMS",
]

logger = logging.getLogger(__name__)

DEFAULT_N_TERMS = 20


def log_plus(u):
    """log(max(u, 1)), so that log_plus(0) == 0."""
    return np.log(np.maximum(u, 1.0))


def beta(kappa: float, lam: float) -> float:
    if lam <= 0:
        raise DomainError(f"the weight rate must be positive, got lambda={lam}")
    if kappa < 0:
        raise DomainError(f"the growth constant must be nonnegative, got kappa={kappa}")
    return max(0.5 * lam**2, 4.0 * kappa)


def t_star(kappa: float, lam: float) -> float:
    """Largest horizon T with (kappa/beta) exp((lambda^2/4beta) e^{2 beta T - 1}) <= 1/2."""
    b = beta(kappa, lam)
    if kappa == 0:
        raise DomainError("T* is undefined for kappa = 0")
    return (1.0 + np.log(4.0 * b / lam**2 * np.log(b / (2.0 * kappa)))) / (2.0 * b)


@dataclass(frozen=True)
class WeightParams:
    lam: float
    kappa: float = 0.0
    beta: float = None
    t_star: float = None

    def __post_init__(self):
        if self.beta is None:
            object.__setattr__(self, "beta", beta(self.kappa, self.lam))
        elif self.lam <= 0:
            raise DomainError(f"the weight rate must be positive, got lambda={self.lam}")
        if self.t_star is None:
            value = t_star(self.kappa, self.lam) if self.kappa > 0 else np.inf
            object.__setattr__(self, "t_star", value)

    @classmethod
    def lipschitz(cls, lam: float) -> "WeightParams":
        """Weights for the Lipschitz regime: beta = 0, plain exp(-lambda |x|)."""
        return cls(lam=lam, kappa=0.0, beta=0.0, t_star=np.inf)

    def weight(self, t, x):
        return np.exp(-self.lam * np.abs(x) * np.exp(self.beta * t))


class MetricValue(NamedTuple):
    """A truncated series value.

    ``series_error`` bounds the dropped tail 2^-N; ``domain_weight`` is the
    slowest weight e^{-|x|/N} at the edge of the spatial window, which bounds
    what the grid truncation can hide relative to the largest difference.
    """

    value: float
    series_error: float
    domain_weight: float


def tem_norm(f: Field, lam: float) -> float:
    """|f|_(-lambda) = sup_x |f(x)| e^{-lambda |x|} over the grid."""
    if lam <= 0:
        raise DomainError(f"the weight rate must be positive, got lambda={lam}")
    return float(np.max(np.abs(f.values) * np.exp(-lam * np.abs(f.grid.x))))


def _metric_terms(diff: np.ndarray, x: np.ndarray, n_terms: int) -> np.ndarray:
    """min(1, |diff|_(-1/n)) for n = 1..n_terms along the last axis."""
    n = np.arange(1, n_terms + 1)
    weights = np.exp(-np.abs(x)[None, :] / n[:, None])
    norms = np.max(np.abs(diff)[..., None, :] * weights, axis=-1)
    return np.minimum(1.0, norms)


def _series(diff, grid: GridSpec, n_terms: int) -> np.ndarray:
    if n_terms < 1:
        raise DomainError(f"need N_terms >= 1, got {n_terms}")
    coeffs = 0.5 ** np.arange(1, n_terms + 1)
    diff = np.asarray(diff)
    if diff.ndim == 1:
        return _metric_terms(diff, grid.x, n_terms) @ coeffs
    rows = [
        _metric_terms(diff[start : start + 256], grid.x, n_terms) @ coeffs
        for start in range(0, diff.shape[0], 256)
    ]
    return np.concatenate(rows)


def _metric_value(value: float, grid: GridSpec, n_terms: int) -> MetricValue:
    return MetricValue(float(value), 0.5**n_terms, float(np.exp(-grid.half_width / n_terms)))


def tem_metric(f: Field, g: Field, N_terms: int = DEFAULT_N_TERMS) -> MetricValue:
    if f.grid != g.grid:
        raise ShapeError("fields live on different grids")
    return _metric_value(_series(f.values - g.values, f.grid, N_terms), f.grid, N_terms)


def path_metric(F: Trajectory, G: Trajectory, N_terms: int = DEFAULT_N_TERMS) -> MetricValue:
    """sup over time steps of tem_metric(F(t), G(t))."""
    if F.grid != G.grid:
        raise ShapeError("trajectories live on different grids")
    per_step = _series(F.values - G.values, F.grid, N_terms)
    return _metric_value(np.max(per_step), F.grid, N_terms)


def time_weighted_sup(F: Trajectory, w: WeightParams) -> float:
    """sup_{t,x} |F(t,x)| exp(-lambda |x| e^{beta t}) over the grid."""
    weight = w.weight(F.grid.times[:, None], F.grid.x[None, :])
    return float(np.max(np.abs(F.values) * weight))


def weighted_sup_distance(F: Trajectory, G: Trajectory, w: WeightParams) -> float:
    if F.grid != G.grid:
        raise ShapeError("trajectories live on different grids")
    return time_weighted_sup(Trajectory(F.grid, F.values - G.values), w)


def metric_axioms_report(
    samples: int, seed: int = 0, grid: GridSpec = None, N_terms: int = DEFAULT_N_TERMS
) -> List[InequalityReport]:
    """Identity, symmetry and triangle inequality of tem_metric on random fields.

    Fields are random sums of scaled Gaussian bumps and linear ramps, so that
    both clamped and unclamped series terms occur.
    """
    grid = grid or GridSpec(n_x=128)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 42]))
    x = grid.x

    def random_values(count):
        scale = 10.0 ** rng.uniform(-3, 1, (count, 1))
        centers = rng.uniform(-grid.half_width, grid.half_width, (count, 1))
        slope = rng.normal(size=(count, 1))
        return scale * (np.exp(-((x - centers) ** 2)) + 0.1 * slope * x)

    f, g, h = (random_values(samples) for _ in range(3))
    d_fg = _series(f - g, grid, N_terms)
    d_gf = _series(g - f, grid, N_terms)
    d_fh = _series(f - h, grid, N_terms)
    d_hg = _series(h - g, grid, N_terms)
    d_ff = _series(f - f, grid, N_terms)
    points = {"sample": np.arange(samples)}
    return [
        InequalityReport.from_sides(
            "identity", np.abs(d_ff), np.zeros(samples), points, atol=1e-12, rtol=0.0
        ),
        InequalityReport.from_sides(
            "symmetry", np.abs(d_fg - d_gf), np.zeros(samples), points, atol=1e-12, rtol=0.0
        ),
        InequalityReport.from_sides("triangle", d_fg, d_fh + d_hg, points, atol=1e-12),
    ]


def t_star_root_report(samples: int, seed: int = 0, tol: float = 1e-9) -> InequalityReport:
    """(kappa/beta) exp((lambda^2/4beta) e^{2 beta T* - 1}) == 1/2 on random (kappa, lambda)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 41]))
    kappa = 10.0 ** rng.uniform(-2, 1, samples)
    lam = 10.0 ** rng.uniform(-2, 1, samples)
    b = np.maximum(0.5 * lam**2, 4.0 * kappa)
    horizon = (1.0 + np.log(4.0 * b / lam**2 * np.log(b / (2.0 * kappa)))) / (2.0 * b)
    # log of both sides keeps the double exponential in range
    lhs = np.log(kappa / b) + lam**2 / (4.0 * b) * np.exp(2.0 * b * horizon - 1.0)
    residual = np.abs(np.exp(lhs) - 0.5)
    return InequalityReport.from_sides(
        "t_star",
        residual,
        np.full(samples, tol),
        {"kappa": kappa, "lambda": lam},
        atol=0.0,
        rtol=0.0,
    )
