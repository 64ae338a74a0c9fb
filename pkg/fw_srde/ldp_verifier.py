"""Desk-scale evidence for the large deviation principle.

Tail probabilities P(u^eps(T, x0) > a) are estimated by plain Monte Carlo
or, for small eps, under the Girsanov tilt by the minimizing control; the
curve eps log p against -I shows the exponential rate. The two ingredients
of the weak convergence method are probed separately: continuity of the
skeleton map along weakly null control perturbations (C1) and vanishing
noise convergence of controlled solutions (C2).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import special, stats

from .coefficients import CoefficientSet
from .exceptions import DomainError, ShapeError
from .grid import ControlField, Field, GridSpec
from .rate_function import EndpointEvent, OptimizerConfig, RateResult, minimize_rate_endpoint
from .skeleton_solver import DEFAULT_SCHEDULE, solve_skeleton, solve_skeleton_scan
from .spde_solver import SolveConfig, simulate_ensemble, solve_spde
from .weights_metrics import path_metric

__all__ = [
    "ProbabilityEstimate",
    "LDPCurve",
    "C1Table",
    "C2Table",
    "estimate_probability",
    "linear_gaussian_probability",
    "ldp_curve",
    "c1_experiment",
    "c2_experiment",
    "DEFAULT_EPS_GRID",
    "C1_M_LIST",
    "C2_EPS_LIST",
]

logger = logging.getLogger(__name__)

DEFAULT_EPS_GRID = (1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01)
PLAIN_THRESHOLD = 0.2
MIN_SAMPLES = 100
MIN_ESS = 10.0
CONFIDENCE = 0.95
STREAM_BLOCK = 2**20
C1_M_LIST = (1, 2, 4, 8, 16)
C1_DECAY = 0.05
C2_EPS_LIST = (0.1, 0.03, 0.01, 0.003, 0.001)
C2_DELTA = 0.05
C2_SLOPE_BAND = (0.4, 0.6)


@dataclass
class ProbabilityEstimate:
    """p ~ P(u^eps(T, x0) > a) with a normal-approximation interval.

    ``ess`` is the effective sample size (sum v)^2 / sum v^2 of the
    per-sample contributions v = 1{hit} w; without a tilt it is the hit
    count.
    """

    p: float
    log_p: float
    stderr: float
    ci_low: float
    ci_high: float
    ess: float
    samples: int
    eps: float
    method: str

    @property
    def reliable(self) -> bool:
        return self.ess >= MIN_ESS

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "p": self.p,
            "log_p": self.log_p,
            "stderr": self.stderr,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "ess": self.ess,
            "samples": self.samples,
            "method": self.method,
            "reliable": self.reliable,
        }


def linear_gaussian_probability(
    a: float, eps: float, T: float = 1.0, variance: Optional[float] = None, log: bool = False
) -> float:
    """1 - Phi(a / sqrt(eps v)) for b = 0, sigma = 1, u0 = 0.

    ``v`` defaults to the continuum variance sqrt(T / pi) of the stochastic
    convolution; ``noise.convolution_variance`` gives the grid value.
    """
    if eps <= 0:
        raise DomainError(f"need eps > 0, got {eps}")
    variance = np.sqrt(T / np.pi) if variance is None else variance
    z = -a / np.sqrt(eps * variance)
    return float(special.log_ndtr(z) if log else special.ndtr(z))


def _default_u0(event: EndpointEvent, u0: Optional[Field], grid: Optional[GridSpec]) -> Field:
    if u0 is not None:
        return u0
    return Field.zeros(grid or GridSpec(T=event.T))


def estimate_probability(
    event: EndpointEvent,
    coeffs: CoefficientSet,
    eps: float,
    n_samples: int,
    tilt: Optional[ControlField] = None,
    seed: int = 0,
    u0: Optional[Field] = None,
    grid: Optional[GridSpec] = None,
    workers: int = 1,
    stream: int = 0,
) -> ProbabilityEstimate:
    """P(u^eps(T, x0) > a), by plain Monte Carlo or under the tilt ``tilt``.

    Under a tilt the controlled equation is simulated and every sample is
    reweighted by the discrete likelihood ratio of its own increments, which
    is exact for the discretized model.
    """
    if n_samples < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} samples, got {n_samples}")
    if eps <= 0:
        raise DomainError(f"need eps > 0, got {eps}")
    if tilt is not None and grid is None and u0 is None:
        grid = tilt.grid
    u0 = _default_u0(event, u0, grid)
    event.check(u0.grid)
    if tilt is not None and tilt.grid != u0.grid:
        raise ShapeError("tilt and initial datum live on different grids")
    cfg = SolveConfig(coeffs, u0, eps=eps, control=tilt, seed=seed, stream=stream)
    result = simulate_ensemble(cfg, n_samples, workers=workers, x_probe=event.x0, tilt=tilt is not None)
    hits = result.endpoints > event.a
    if tilt is None:
        log_w = np.zeros(n_samples)
        method = "plain"
    else:
        log_w = result.log_weights
        method = "tilted"
    values = np.where(hits, np.exp(log_w), 0.0)
    p = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / np.sqrt(n_samples))
    log_p = (
        float(special.logsumexp(log_w[hits]) - np.log(n_samples)) if np.any(hits) else -np.inf
    )
    total_sq = float(np.sum(values**2))
    ess = float(np.sum(values) ** 2 / total_sq) if total_sq > 0 else 0.0
    z = stats.norm.ppf(0.5 + CONFIDENCE / 2)
    estimate = ProbabilityEstimate(
        p=p,
        log_p=log_p,
        stderr=stderr,
        ci_low=max(0.0, p - z * stderr),
        ci_high=min(1.0, p + z * stderr),
        ess=ess,
        samples=n_samples,
        eps=float(eps),
        method=method,
    )
    if not estimate.reliable:
        logger.warning(
            "unreliable %s estimate at eps=%g: effective sample size %.1f", method, eps, ess
        )
    return estimate


@dataclass
class LDPCurve:
    event: EndpointEvent
    rate: float
    estimates: List[ProbabilityEstimate]

    @property
    def rows(self) -> List[Dict[str, float]]:
        return [
            {
                "eps": e.eps,
                "p": e.p,
                "ci_low": e.ci_low,
                "ci_high": e.ci_high,
                "eps_log_p": e.eps * e.log_p,
                "minus_rate": -self.rate,
                "method": e.method,
                "ess": e.ess,
                "reliable": e.reliable,
            }
            for e in self.estimates
        ]

    @property
    def final_relative_gap(self) -> float:
        """|eps log p + I| / I at the smallest eps."""
        last = min(self.estimates, key=lambda e: e.eps)
        if self.rate == 0:
            return abs(last.eps * last.log_p)
        return abs(last.eps * last.log_p + self.rate) / self.rate

    def as_dict(self) -> dict:
        return {
            "event": self.event._asdict(),
            "rate": self.rate,
            "rows": self.rows,
            "final_relative_gap": self.final_relative_gap,
        }


def ldp_curve(
    event: EndpointEvent,
    coeffs: CoefficientSet,
    eps_list: Sequence[float] = DEFAULT_EPS_GRID,
    n_samples: int = 10000,
    seed: int = 0,
    rate: Optional[RateResult] = None,
    u0: Optional[Field] = None,
    grid: Optional[GridSpec] = None,
    workers: int = 1,
    opt: Optional[OptimizerConfig] = None,
    stream: int = 0,
) -> LDPCurve:
    """(eps, p, eps log p, -I) for every eps; tilted sampling below eps = 0.2.

    The minimizing control comes from ``rate`` or is computed here; each eps
    draws from its own block of noise streams, starting at ``stream``.
    """
    u0 = _default_u0(event, u0, grid)
    if rate is None:
        rate = minimize_rate_endpoint(coeffs, u0, event, opt)
    estimates = []
    for i, eps in enumerate(eps_list):
        tilt = None if eps >= PLAIN_THRESHOLD else rate.control
        estimate = estimate_probability(
            event,
            coeffs,
            eps,
            n_samples,
            tilt=tilt,
            seed=seed,
            u0=u0,
            workers=workers,
            stream=stream + i * STREAM_BLOCK,
        )
        logger.info(
            "eps=%g: p=%.4g (%s), eps log p=%.4f", eps, estimate.p, estimate.method,
            eps * estimate.log_p,
        )
        estimates.append(estimate)
    return LDPCurve(event, rate.rate, estimates)


def _fit_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


Profile = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _gaussian_profile(t, x):
    return np.exp(-(x**2)) * np.ones_like(t)


@dataclass
class C1Table:
    """Path distances d(Y^{h_m}, Y^h) for h_m = h + sin(m x) g."""

    m_list: List[int]
    distances: List[float]
    energies: List[float]
    exponent: Optional[float] = None

    @property
    def monotone(self) -> bool:
        """Distances never increase along m_list."""
        return all(b <= a for a, b in zip(self.distances, self.distances[1:]))

    @property
    def passed(self) -> bool:
        """Below C1_DECAY of the first distance at the end, monotone from the peak on.

        sin(m x) g is small at m = 1 for centered g, so the distances may rise
        before they decay; ``monotone`` reports the strict reading.
        """
        first, last = self.distances[0], self.distances[-1]
        if first == 0:
            return all(d == 0 for d in self.distances)
        tail = self.distances[int(np.argmax(self.distances)) :]
        decays = all(b <= a for a, b in zip(tail, tail[1:]))
        return last < first and last < C1_DECAY * first and decays

    def as_dict(self) -> dict:
        return {
            "rows": [
                {"m": m, "distance": d, "energy": e}
                for m, d, e in zip(self.m_list, self.distances, self.energies)
            ],
            "exponent": self.exponent,
            "monotone": self.monotone,
            "passed": self.passed,
        }


def c1_experiment(
    coeffs: CoefficientSet,
    u0: Field,
    h: Optional[ControlField] = None,
    m_list: Sequence[int] = C1_M_LIST,
    g: Union[Profile, ControlField, None] = None,
    n: int = DEFAULT_SCHEDULE[-1],
) -> C1Table:
    """Skeleton continuity along a weakly null family.

    sin(m x) g(t, x) tends to 0 weakly in L^2 while its norm stays bounded,
    so Y^{h_m} must approach Y^h. ``exponent`` is the fitted decay rate of
    the distance in m. Log-Lipschitz sets are solved through their
    mollification at index ``n``, as ``solve_skeleton`` does.
    """
    grid = u0.grid
    h = h or ControlField.zeros(grid)
    if h.grid != grid:
        raise ShapeError("control and initial datum live on different grids")
    if isinstance(g, ControlField):
        profile = g.values
    else:
        profile = ControlField.from_function(grid, g or _gaussian_profile).values
    reference = solve_skeleton(coeffs, u0, h, n=n)
    distances, energies = [], []
    for m in m_list:
        h_m = ControlField(grid, h.values + np.sin(m * grid.x)[None, :] * profile)
        Y = solve_skeleton(coeffs, u0, h_m, n=n)
        distances.append(path_metric(Y, reference).value)
        energies.append(h_m.energy)
        logger.debug("C1 m=%d: distance %.4e", m, distances[-1])
    exponent = None
    if len(m_list) > 1 and all(d > 0 for d in distances):
        exponent = -_fit_slope(m_list, distances)
    table = C1Table(list(m_list), distances, energies, exponent)
    if not table.passed:
        logger.warning("C1 distances %s do not decay below %.0f%%", distances, 100 * C1_DECAY)
    elif not table.monotone:
        logger.info("C1 distances %s rise before they decay", distances)
    return table


@dataclass
class C2Table:
    """Mean and exceedance frequency of d(X^{eps,h}, Y^h) per eps."""

    eps_list: List[float]
    means: List[float]
    stderrs: List[float]
    exceedances: List[float]
    delta: float
    slope: Optional[float] = None
    samples: int = 0
    band: Sequence[float] = field(default=C2_SLOPE_BAND)

    @property
    def passed(self) -> bool:
        return self.slope is not None and self.band[0] <= self.slope <= self.band[1]

    def as_dict(self) -> dict:
        return {
            "rows": [
                {"eps": e, "mean": m, "stderr": s, "exceedance": x}
                for e, m, s, x in zip(self.eps_list, self.means, self.stderrs, self.exceedances)
            ],
            "delta": self.delta,
            "slope": self.slope,
            "samples": self.samples,
            "passed": self.passed,
        }


def _controlled_distance(coeffs, u0, h, eps, seed, stream, reference) -> float:
    cfg = SolveConfig(coeffs, u0, eps=eps, control=h, seed=seed, stream=stream)
    return path_metric(solve_spde(cfg), reference).value


def c2_experiment(
    coeffs: CoefficientSet,
    u0: Field,
    h: Optional[ControlField] = None,
    eps_list: Sequence[float] = C2_EPS_LIST,
    n_samples: int = 50,
    seed: int = 0,
    delta: float = C2_DELTA,
    workers: int = 1,
    stream: int = 0,
) -> C2Table:
    """Vanishing noise: d(X^{eps,h}, Y^h) against eps, with fresh noise per eps.

    The slope of log mean distance against log eps is fitted over eps > 0;
    sqrt(eps) scaling gives 1/2. Sample j at the i-th eps uses noise stream
    ``stream + i * n_samples + j``.

    Y^h is the scan of the unmollified coefficients in every regime: it is
    the eps = 0 case of the recursion ``solve_spde`` runs, so the distance
    at eps = 0 is exactly zero.
    """
    if n_samples < 2:
        raise DomainError("need at least two samples per eps")
    reference = solve_skeleton_scan(coeffs, u0, h)
    means, stderrs, exceedances = [], [], []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for i, eps in enumerate(eps_list):
            futures = [
                pool.submit(
                    _controlled_distance,
                    coeffs,
                    u0,
                    h,
                    eps,
                    seed,
                    stream + i * n_samples + j,
                    reference,
                )
                for j in range(n_samples)
            ]
            distances = np.array([future.result() for future in futures])
            means.append(float(distances.mean()))
            stderrs.append(float(distances.std(ddof=1) / np.sqrt(n_samples)))
            exceedances.append(float(np.mean(distances > delta)))
            logger.debug("C2 eps=%g: mean distance %.4e", eps, means[-1])
    positive = [(e, m) for e, m in zip(eps_list, means) if e > 0 and m > 0]
    slope = _fit_slope(*zip(*positive)) if len(positive) > 1 else None
    table = C2Table(
        [float(e) for e in eps_list], means, stderrs, exceedances, delta, slope, n_samples
    )
    if not table.passed:
        logger.warning("C2 slope %s outside %s", slope, C2_SLOPE_BAND)
    return table
