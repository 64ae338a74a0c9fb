"""The heat kernel of (1/2) d^2/dx^2 on the real line.

Point evaluations, the periodic discrete semigroup and the a priori kernel
estimates used throughout the well-posedness and large deviation analysis.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import fft
from scipy.integrate import quad
from scipy.special import erfc, ndtr

from .checks.base import InequalityReport, merge_reports
from .exceptions import DomainError, NumericalError, ShapeError
from .grid import Field, GridSpec

__all__ = [
    "kernel_value",
    "heat_multiplier",
    "forcing_multiplier",
    "apply_multiplier",
    "semigroup_apply",
    "weighted_mass_closed_form",
    "weighted_kernel_integrals",
    "inequality_sides",
    "kernel_inequality_suite",
    "kernel_mass_report",
    "INEQUALITY_IDS",
    "SAMPLE_RANGES",
]

logger = logging.getLogger(__name__)

QUAD_ABS_TOL = 1e-10
INEQUALITY_IDS = ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii")
SAMPLE_RANGES = {
    "t": (1e-3, 5.0),
    "x": (-10.0, 10.0),
    "eta": (0.0, 2.0),
    "theta": (0.0, 1.0),
}
CHUNK_SIZE = 256


def kernel_value(t, x, y):
    """p_t(x, y) = exp(-(x - y)^2 / 2t) / sqrt(2 pi t); broadcasts over arrays."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("the heat kernel needs t > 0")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.exp(-(d**2) / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)


def _wavenumbers(grid: GridSpec) -> np.ndarray:
    return 2.0 * np.pi * fft.rfftfreq(grid.n_x, d=grid.dx)


@lru_cache(maxsize=64)
def heat_multiplier(grid: GridSpec, t: float) -> np.ndarray:
    """Fourier multiplier exp(-k^2 t / 2) of P_t on the periodic grid."""
    return np.exp(-0.5 * _wavenumbers(grid) ** 2 * t)


@lru_cache(maxsize=64)
def forcing_multiplier(grid: GridSpec) -> np.ndarray:
    """Multiplier sqrt((1 - exp(-k^2 dt)) / (k^2 dt)) applied to per-step forcing.

    Squared and summed against the heat flow it reproduces the exact variance
    of the stochastic convolution over one step; for smooth forcing it agrees
    with the exponential-Euler factor to first order in dt.
    """
    z = _wavenumbers(grid) ** 2 * grid.dt
    out = np.ones_like(z)
    nonzero = z > 0
    out[nonzero] = np.sqrt(-np.expm1(-z[nonzero]) / z[nonzero])
    return out


def apply_multiplier(values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    """Apply a real even Fourier multiplier along the last axis."""
    n = values.shape[-1]
    return fft.irfft(fft.rfft(values, axis=-1) * multiplier, n=n, axis=-1)


def semigroup_apply(f: Field, t: float, grid: Optional[GridSpec] = None) -> Field:
    """P_t f on the grid.

    With periodic extension this is a circular convolution done in Fourier
    space; otherwise the kernel is summed directly over the truncated window.
    """
    grid = f.grid if grid is None else grid
    if f.grid != grid:
        raise ShapeError("field and grid do not match")
    if t < 0:
        raise DomainError("the semigroup needs t >= 0")
    if t == 0:
        return Field(grid, f.values.copy())
    if grid.periodic_extension:
        return Field(grid, apply_multiplier(f.values, heat_multiplier(grid, float(t))))
    x = grid.x
    weights = kernel_value(t, x[:, None], x[None, :]) * grid.dx
    return Field(grid, weights @ f.values)


class KernelIntegral(NamedTuple):
    exact: float
    bound: float


def weighted_mass_closed_form(t, x, eta):
    """int p_t(x, y) exp(eta |y|) dy in closed form."""
    t, x, eta = (np.asarray(v, dtype=float) for v in (t, x, eta))
    sqrt_t = np.sqrt(t)
    return np.exp(0.5 * eta**2 * t) * (
        np.exp(eta * x) * ndtr((x + eta * t) / sqrt_t)
        + np.exp(-eta * x) * ndtr((eta * t - x) / sqrt_t)
    )


def _quad_window(integrand, x, t, eta, tol=QUAD_ABS_TOL):
    """Adaptive quadrature around x, extending the window until the tails are negligible."""
    half = 12.0 * np.sqrt(t) + 2.0 * abs(eta) * t
    for _ in range(30):
        lo, hi = x - half, x + half
        tail = (integrand(lo) + integrand(hi)) * (np.sqrt(t) + abs(eta) * t)
        if tail < tol:
            break
        half *= 1.5
    else:
        raise NumericalError(
            "integration window did not capture the kernel mass",
            {"t": t, "x": x, "eta": eta, "tail": tail},
        )
    breakpoints = sorted({lo, hi, min(max(0.0, lo), hi), min(max(x, lo), hi)})
    total = 0.0
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        if b <= a:
            continue
        result = quad(integrand, a, b, epsabs=tol, epsrel=1e-12, limit=200, full_output=1)
        if len(result) > 3:
            raise NumericalError(
                "adaptive quadrature did not converge",
                {"t": t, "x": x, "eta": eta, "segment": (a, b), "message": result[3]},
            )
        total += result[0]
    return total


def weighted_kernel_integrals(t: float, x: float, eta: float) -> Dict[str, KernelIntegral]:
    """Exact values and bounds of the three weighted kernel integrals.

    (i)   int p_t(x,y) e^{eta|y|} dy      <= 2 e^{eta^2 t/2} e^{eta|x|}
    (ii)  int p_t(x,y)^2 e^{eta|y|} dy    <= e^{eta^2 t/4} e^{eta|x|} / sqrt(pi t)
    (iii) int p_t(x,y) e^{eta|y|} eta|y| dy (eta > 0 only)
    """
    if t <= 0:
        raise DomainError("the weighted kernel integrals need t > 0")
    growth = np.exp(eta * abs(x))
    out = {
        "i": KernelIntegral(
            _quad_window(lambda y: kernel_value(t, x, y) * np.exp(eta * abs(y)), x, t, eta),
            2.0 * np.exp(0.5 * eta**2 * t) * growth,
        ),
        "ii": KernelIntegral(
            _quad_window(
                lambda y: kernel_value(t, x, y) ** 2 * np.exp(eta * abs(y)), x, t, eta
            ),
            np.exp(0.25 * eta**2 * t) * growth / np.sqrt(np.pi * t),
        ),
    }
    if eta > 0:
        out["iii"] = KernelIntegral(
            _quad_window(
                lambda y: kernel_value(t, x, y) * np.exp(eta * abs(y)) * eta * abs(y),
                x,
                t,
                eta,
            ),
            np.exp(0.5 * eta**2 * t) * growth * eta * abs(x)
            + 2.0
            * np.exp(0.5 * eta**2 * t)
            * (eta**2 * t + eta * np.sqrt(t / (2.0 * np.pi)))
            * growth,
        )
    return out


@lru_cache(maxsize=4)
def _panel_rule(n_panels: int = 24, order: int = 16):
    """Composite Gauss-Legendre nodes and weights on [0, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    u = ((np.arange(n_panels)[:, None] + 0.5 * (nodes[None, :] + 1.0)) / n_panels).ravel()
    w = np.tile(0.5 * weights / n_panels, n_panels)
    return u, w


def _vector_quadrature(integrand, centers: Sequence[np.ndarray], half, extra_breaks=()):
    """Integrate integrand(z) per sample over the union of windows center +- half.

    ``integrand`` maps an (m, N) array of nodes to values; breakpoints are
    the window ends plus ``extra_breaks`` (kinks of the integrand).
    """
    u, w = _panel_rule()
    ends = [c - half for c in centers] + [c + half for c in centers]
    breaks = np.sort(np.stack(ends + list(extra_breaks), axis=-1), axis=-1)
    lo = np.minimum.reduce([c - half for c in centers])
    hi = np.maximum.reduce([c + half for c in centers])
    breaks = np.clip(breaks, lo[:, None], hi[:, None])
    total = np.zeros(breaks.shape[0])
    for j in range(breaks.shape[1] - 1):
        a, b = breaks[:, j], breaks[:, j + 1]
        mid = 0.5 * (a + b)
        covered = np.zeros_like(mid, dtype=bool)
        for c in centers:
            covered |= np.abs(mid - c) <= half
        length = np.where(covered, b - a, 0.0)
        z = a[:, None] + length[:, None] * u[None, :]
        total += length * (integrand(z) @ w)
    return total


def _window(t, eta):
    return 12.0 * np.sqrt(t) + 2.0 * eta * t


def _sides_i(t, x, eta, **_):
    lhs = _vector_quadrature(
        lambda z: kernel_value(t[:, None], x[:, None], z) * np.exp(eta[:, None] * np.abs(z)),
        [x],
        _window(t, eta),
        [np.zeros_like(x)],
    )
    return lhs, 2.0 * np.exp(0.5 * eta**2 * t) * np.exp(eta * np.abs(x))


def _sides_ii(t, x, eta, **_):
    lhs = _vector_quadrature(
        lambda z: kernel_value(t[:, None], x[:, None], z) ** 2
        * np.exp(eta[:, None] * np.abs(z)),
        [x],
        _window(t, eta),
        [np.zeros_like(x)],
    )
    return lhs, np.exp(0.25 * eta**2 * t) * np.exp(eta * np.abs(x)) / np.sqrt(np.pi * t)


def _sides_iii(t, x, eta, **_):
    lhs = _vector_quadrature(
        lambda z: kernel_value(t[:, None], x[:, None], z)
        * np.exp(eta[:, None] * np.abs(z))
        * eta[:, None]
        * np.abs(z),
        [x],
        _window(t, eta),
        [np.zeros_like(x)],
    )
    growth = np.exp(0.5 * eta**2 * t) * np.exp(eta * np.abs(x))
    rhs = growth * eta * np.abs(x) + 2.0 * growth * (
        eta**2 * t + eta * np.sqrt(t / (2.0 * np.pi))
    )
    return lhs, rhs


def _sides_iv(t, s, x, y, theta, **_):
    lhs = np.abs(kernel_value(t, x, y) - kernel_value(s, x, y))
    factor = (2.0 * np.sqrt(2.0)) ** theta * np.abs(t - s) ** theta / s**theta
    rhs = factor * (kernel_value(s, x, y) + kernel_value(t, x, y) + kernel_value(2 * t, x, y))
    return lhs, rhs


def _difference_integral(t, x, y, eta, power):
    """int |p_t(x,z) - p_t(y,z)| e^{eta|z|} (eta|z|)^power dz."""

    def integrand(z):
        out = np.abs(
            kernel_value(t[:, None], x[:, None], z) - kernel_value(t[:, None], y[:, None], z)
        ) * np.exp(eta[:, None] * np.abs(z))
        if power:
            out = out * eta[:, None] * np.abs(z)
        return out

    return _vector_quadrature(
        integrand, [x, y], _window(t, eta), [np.zeros_like(x), 0.5 * (x + y)]
    )


def _sides_v(t, x, y, **_):
    lhs = _difference_integral(t, x, y, np.zeros_like(t), 0)
    return lhs, np.sqrt(2.0 / np.pi) * np.abs(x - y) / np.sqrt(t)


def _sides_vi(t, x, y, eta, **_):
    lhs = _difference_integral(t, x, y, eta, 0)
    d = np.abs(x - y)
    rhs = (
        2.0
        * np.sqrt(2.0)
        * d
        / np.sqrt(t)
        * np.exp(eta**2 * t)
        * np.exp(eta * (np.abs(x) + d))
    )
    return lhs, rhs


def _sides_vii(t, x, y, eta, **_):
    lhs = _difference_integral(t, x, y, eta, 1)
    d = np.abs(x - y)
    reach = np.abs(x) + d
    growth = np.exp(eta**2 * t) * np.exp(eta * reach)
    rhs = (
        np.sqrt(2.0)
        * d
        / np.sqrt(t)
        * (
            growth * eta * reach
            + 2.0 * growth * (2.0 * eta**2 * t + eta * np.sqrt(t / np.pi))
        )
    )
    return lhs, rhs


def _kernel_time_integral(d, a, b):
    """int_a^b p_u(0, d) du, through the antiderivative
    sqrt(2u/pi) e^{-d^2/2u} - d erfc(d / sqrt(2u)), which vanishes at u = 0."""

    def antiderivative(u):
        u = np.asarray(u, dtype=float)
        positive = u > 0
        safe = np.where(positive, u, 1.0)
        value = np.sqrt(2.0 * safe / np.pi) * np.exp(-(d**2) / (2.0 * safe)) - d * erfc(
            d / np.sqrt(2.0 * safe)
        )
        return np.where(positive, value, 0.0)

    return antiderivative(b) - antiderivative(a)


def _sides_viii(t, s, x, y, **_):
    """int_0^s int |p_{t-r}(x,z) - p_{s-r}(y,z)|^2 dz dr.

    The z-integral of the expanded square is Gaussian; what remains is the
    time integral of p_u(x, y) over u in [t - s, t + s].
    """
    d = np.abs(x - y)
    gap = np.maximum(t - s, 0.0)
    lhs = (np.sqrt(t) - np.sqrt(gap) + np.sqrt(s)) / np.sqrt(np.pi) - _kernel_time_integral(
        d, gap, t + s
    )
    rhs = (np.sqrt(2.0) - 1.0) / np.sqrt(np.pi) * np.sqrt(np.abs(t - s)) + 2.0 / np.sqrt(
        np.pi
    ) * d
    return lhs, rhs


_SIDES = {
    "i": _sides_i,
    "ii": _sides_ii,
    "iii": _sides_iii,
    "iv": _sides_iv,
    "v": _sides_v,
    "vi": _sides_vi,
    "vii": _sides_vii,
    "viii": _sides_viii,
}


def inequality_sides(inequality_id: str, **params):
    """Left and right side of one kernel estimate at the given (array) parameters.

    (iv) and (viii) need 0 < s <= t; (iii), (vi), (vii) need eta > 0.
    """
    try:
        sides = _SIDES[inequality_id]
    except KeyError:
        raise DomainError(f"unknown kernel inequality '{inequality_id}'")
    params = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in params.items()}
    if params:
        shape = np.broadcast_shapes(*(v.shape for v in params.values()))
        params = {k: np.broadcast_to(v, shape).astype(float) for k, v in params.items()}
    return sides(**params)


def _draw(rng: np.random.Generator, size: int) -> Dict[str, np.ndarray]:
    t_lo, t_hi = SAMPLE_RANGES["t"]
    first = rng.uniform(t_lo, t_hi, size)
    second = rng.uniform(t_lo, t_hi, size)
    x_lo, x_hi = SAMPLE_RANGES["x"]
    eta_lo, eta_hi = SAMPLE_RANGES["eta"]
    return {
        "t": np.maximum(first, second),
        "s": np.minimum(first, second),
        "x": rng.uniform(x_lo, x_hi, size),
        "y": rng.uniform(x_lo, x_hi, size),
        # (iii), (vi) and (vii) need eta > 0
        "eta": eta_hi - rng.uniform(eta_lo, eta_hi, size),
        "theta": rng.uniform(*SAMPLE_RANGES["theta"], size),
    }


def _run_chunk(inequality_id: str, seed_seq: np.random.SeedSequence, size: int):
    points = _draw(np.random.default_rng(seed_seq), size)
    lhs, rhs = _SIDES[inequality_id](**points)
    return InequalityReport.from_sides(inequality_id, lhs, rhs, points)


def kernel_inequality_suite(
    samples: int,
    seed: int = 0,
    inequality_ids: Sequence[str] = INEQUALITY_IDS,
    workers: int = 1,
) -> List[InequalityReport]:
    """Randomized certification of the eight heat kernel estimates.

    Samples are drawn in fixed chunks with their own seed sequence, so the
    result does not depend on ``workers``.
    """
    if samples <= 0:
        raise DomainError("the inequality suite needs samples > 0")
    sizes = [CHUNK_SIZE] * (samples // CHUNK_SIZE)
    if samples % CHUNK_SIZE:
        sizes.append(samples % CHUNK_SIZE)
    reports = []
    for code, inequality_id in enumerate(INEQUALITY_IDS):
        if inequality_id not in inequality_ids:
            continue
        seeds = np.random.SeedSequence([seed, code]).spawn(len(sizes))
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            shards = list(pool.map(_run_chunk, [inequality_id] * len(sizes), seeds, sizes))
        report = merge_reports(shards)
        if report.violations:
            logger.warning(
                "kernel estimate (%s): %d violations, worst point %s",
                inequality_id,
                report.violations,
                report.worst_point,
            )
        reports.append(report)
    return reports


def kernel_mass_report(samples: int, seed: int = 0, tol: float = 1e-8) -> InequalityReport:
    """|int p_t(x, y) dy - 1| <= tol over sampled (t, x)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(INEQUALITY_IDS)]))
    t = rng.uniform(*SAMPLE_RANGES["t"], samples)
    x = rng.uniform(*SAMPLE_RANGES["x"], samples)
    mass = _vector_quadrature(
        lambda z: kernel_value(t[:, None], x[:, None], z), [x], _window(t, 0.0)
    )
    return InequalityReport.from_sides(
        "mass", np.abs(mass - 1.0), np.full_like(mass, tol), {"t": t, "x": x}, atol=0.0, rtol=0.0
    )
