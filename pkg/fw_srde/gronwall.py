"""Nonlinear Gronwall bounds with log_+ u and u log_+(1/u) growth terms.

Both bounds work on coefficients c1, c2 >= 0 tabulated on a nondecreasing
time grid. Repeated nodes encode jumps of piecewise-constant coefficients;
integrals are cumulative trapezoid sums on the grid, read off at other
times by linear interpolation. Everything is evaluated in log space.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .checks.base import InequalityReport
from .exceptions import DomainError

__all__ = [
    "LOG_PLUS",
    "LOG_RECIPROCAL",
    "GronwallCertificate",
    "log_plus_bound",
    "log_reciprocal_bound",
    "certify_against_ode",
    "gronwall_suite",
    "monotonicity_report",
]

logger = logging.getLogger(__name__)

LOG_PLUS = "log_plus"
LOG_RECIPROCAL = "log_reciprocal"
LEMMAS = (LOG_PLUS, LOG_RECIPROCAL)

REFINEMENT_TOLERANCE = 1e-8
MAX_TOTAL_STEPS = 2**18
DEFAULT_TABULATION = 2001

Coefficient = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _tabulate(c: Coefficient, times: np.ndarray) -> np.ndarray:
    if callable(c):
        values = np.asarray(c(times), dtype=float) * np.ones_like(times)
    else:
        values = np.asarray(c, dtype=float) * np.ones_like(times)
    if values.shape != times.shape:
        raise DomainError("tabulated coefficient does not match the time grid")
    if np.any(values < 0):
        raise DomainError("Gronwall coefficients must be nonnegative")
    return values


def _prepare(c1: Coefficient, c2: Coefficient, t: float, times: Optional[np.ndarray]):
    """Tabulations restricted to [0, t], with t appended as the last node."""
    if t < 0:
        raise DomainError(f"need t >= 0, got {t}")
    if times is None:
        if not (callable(c1) or np.ndim(c1) == 0) or not (callable(c2) or np.ndim(c2) == 0):
            raise DomainError("tabulated coefficients need their time grid")
        times = np.linspace(0.0, t, DEFAULT_TABULATION)
    times = np.asarray(times, dtype=float)
    if times[0] != 0 or np.any(np.diff(times) < 0):
        raise DomainError("the time grid must start at 0 and be nondecreasing")
    if t > times[-1]:
        raise DomainError(f"t={t} lies beyond the tabulation end {times[-1]}")
    c1, c2 = _tabulate(c1, times), _tabulate(c2, times)
    keep = times < t
    return (
        np.append(times[keep], t),
        np.append(c1[keep], np.interp(t, times, c1)),
        np.append(c2[keep], np.interp(t, times, c2)),
    )


def _integrals(times, c1, c2):
    """(int_0^t c1, int_0^t c2, int_0^t c1(s) e^{-int_0^s c2} ds) at the last node."""
    C1 = cumulative_trapezoid(c1, times, axis=-1, initial=0)
    C2 = cumulative_trapezoid(c2, times, axis=-1, initial=0)
    inner = cumulative_trapezoid(c1 * np.exp(-C2), times, axis=-1, initial=0)
    return C1[..., -1], C2[..., -1], inner[..., -1]


def _log_plus_log_bound(c0, C2, inner):
    return np.exp(C2) * (np.log(c0) + inner)


def _log_reciprocal_log_bound(c0, C1, C2):
    with np.errstate(divide="ignore"):
        log_c0 = np.log(c0)
    # log(c0 + c0^{e^{-C2}}) with c0 = 0 mapped to -inf
    return np.logaddexp(log_c0, np.exp(-C2) * log_c0) + C1 + C2


def log_plus_bound(c0: float, c1: Coefficient, c2: Coefficient, t: float, times=None) -> float:
    """c0^{e^{C2(t)}} exp(e^{C2(t)} int_0^t c1(s) e^{-C2(s)} ds), C2 = int c2.

    Dominates any x with x(t) <= c0 + int c1 x + int c2 x log_+ x.
    """
    if c0 < 1:
        raise DomainError(f"the log_+ bound needs c0 >= 1, got {c0}")
    _, C2, inner = _integrals(*_prepare(c1, c2, t, times))
    return float(np.exp(_log_plus_log_bound(c0, C2, inner)))


def log_reciprocal_bound(
    c0: float, c1: Coefficient, c2: Coefficient, t: float, times=None
) -> float:
    """(c0 + c0^{e^{-C2(t)}}) e^{C1(t) + C2(t)}; zero for c0 = 0."""
    if c0 < 0:
        raise DomainError(f"the log_+(1/x) bound needs c0 >= 0, got {c0}")
    C1, C2, _ = _integrals(*_prepare(c1, c2, t, times))
    return float(np.exp(_log_reciprocal_log_bound(c0, C1, C2)))


def _rhs(lemma, z, c1, c2):
    """Right side of the majorant ODE written for z = log y."""
    if lemma == LOG_PLUS:
        return c1 + c2 * np.maximum(z, 0.0)
    return c1 + c2 + c2 * np.maximum(-z, 0.0)


def _rk4(lemma, z0, times, c1, c2, substeps):
    """Classical RK4 segment by segment; coefficients are linear on each segment.

    Arrays carry a leading sample axis, so many configurations with the same
    number of nodes integrate together.
    """
    z = np.array(z0, dtype=float)
    for j in range(times.shape[-1] - 1):
        a, b = times[..., j], times[..., j + 1]
        h = (b - a) / substeps
        slope1 = (c1[..., j + 1] - c1[..., j]) / np.where(b > a, b - a, 1.0)
        slope2 = (c2[..., j + 1] - c2[..., j]) / np.where(b > a, b - a, 1.0)

        def coefficients(offset):
            return c1[..., j] + slope1 * offset, c2[..., j] + slope2 * offset

        for step in range(substeps):
            s = step * h
            k1 = _rhs(lemma, z, *coefficients(s))
            k2 = _rhs(lemma, z + 0.5 * h * k1, *coefficients(s + 0.5 * h))
            k3 = _rhs(lemma, z + 0.5 * h * k2, *coefficients(s + 0.5 * h))
            k4 = _rhs(lemma, z + h * k3, *coefficients(s + h))
            z = z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return z


def _solve_ode(lemma, z0, times, c1, c2, substeps):
    """Double the substeps until the endpoint moves less than the tolerance."""
    previous = _rk4(lemma, z0, times, c1, c2, substeps)
    change = np.inf
    segments = max(1, times.shape[-1] - 1)
    while substeps * segments < MAX_TOTAL_STEPS:
        substeps *= 2
        current = _rk4(lemma, z0, times, c1, c2, substeps)
        change = float(np.max(np.abs(current - previous)))
        previous = current
        if change < REFINEMENT_TOLERANCE:
            break
    else:
        logger.warning(
            "ODE refinement stopped at %d substeps with change %.3e", substeps, change
        )
    return previous, substeps, change


def _log_bound(lemma, c0, C1, C2, inner):
    if lemma == LOG_PLUS:
        return _log_plus_log_bound(c0, C2, inner)
    return _log_reciprocal_log_bound(c0, C1, C2)


@dataclass
class GronwallCertificate:
    """Bound against the majorant ODE solution, both also given as logs."""

    lemma: str
    bound: float
    ode_value: float
    log_bound: float
    log_ode_value: float
    substeps: int
    refinement_change: float
    overflow: bool

    @property
    def ok(self) -> bool:
        return self.log_ode_value + np.log1p(-1e-6) <= self.log_bound

    def as_dict(self) -> dict:
        return {
            "lemma": self.lemma,
            "bound": self.bound,
            "ode_value": self.ode_value,
            "substeps": self.substeps,
            "refinement_change": self.refinement_change,
            "overflow": self.overflow,
            "ok": self.ok,
        }


def certify_against_ode(
    lemma: str,
    c0: float,
    c1: Coefficient,
    c2: Coefficient,
    t: float,
    times=None,
    steps: int = 4,
) -> GronwallCertificate:
    """Integrate the saturated ODE from y(0) = c0 and compare with the bound.

    ``log_plus``: y' = c1 y + c2 y log_+ y. ``log_reciprocal``:
    y' = (c1 + c2) y + c2 y log_+(1/y). ``steps`` is the initial number of
    RK4 substeps per tabulation interval.
    """
    if lemma not in LEMMAS:
        raise DomainError(f"lemma must be one of {LEMMAS}, got '{lemma}'")
    if lemma == LOG_PLUS and c0 < 1:
        raise DomainError(f"the log_+ bound needs c0 >= 1, got {c0}")
    if c0 < 0:
        raise DomainError(f"need c0 >= 0, got {c0}")
    grid = _prepare(c1, c2, t, times)
    C1, C2, inner = _integrals(*grid)
    log_bound = float(_log_bound(lemma, c0, C1, C2, inner))
    if c0 == 0:
        # y = 0 solves the ODE and the bound is 0
        return GronwallCertificate(lemma, 0.0, 0.0, -np.inf, -np.inf, 0, 0.0, False)
    z, substeps, change = _solve_ode(lemma, np.log(c0), *grid, max(1, int(steps)))
    z = float(z)
    overflow = z > np.log(np.finfo(float).max)
    if overflow:
        logger.info("majorant ODE overflows double precision at t=%g (log value %.6g)", t, z)
    with np.errstate(over="ignore"):
        return GronwallCertificate(
            lemma=lemma,
            bound=float(np.exp(log_bound)),
            ode_value=float(np.exp(z)),
            log_bound=log_bound,
            log_ode_value=z,
            substeps=substeps,
            refinement_change=change,
            overflow=bool(overflow),
        )


def _random_configs(lemma: str, samples: int, seed: int, pieces: int = 6, refine: int = 8):
    """Piecewise-constant c1, c2 in [0, 2] on [0, t], t <= 1, jumps as repeated nodes."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, LEMMAS.index(lemma), 21]))
    if lemma == LOG_PLUS:
        c0 = rng.uniform(1.0, 5.0, samples)
    else:
        c0 = 10.0 ** rng.uniform(-3.0, np.log10(5.0), samples)
    t = rng.uniform(0.05, 1.0, samples)
    levels1 = rng.uniform(0.0, 2.0, (samples, pieces))
    levels2 = rng.uniform(0.0, 2.0, (samples, pieces))
    inside = np.linspace(0.0, 1.0, refine + 1)
    fractions = np.concatenate([(k + inside) / pieces for k in range(pieces)])
    times = t[:, None] * fractions[None, :]
    c1 = np.repeat(levels1, refine + 1, axis=1)
    c2 = np.repeat(levels2, refine + 1, axis=1)
    return c0, t, times, c1, c2


def gronwall_suite(lemma: str, samples: int = 200, seed: int = 0) -> InequalityReport:
    """Certify one bound against its ODE on random configurations.

    Compared in log space: log y(t) + log(1 - 1e-6) <= log bound.
    """
    if lemma not in LEMMAS:
        raise DomainError(f"lemma must be one of {LEMMAS}, got '{lemma}'")
    c0, t, times, c1, c2 = _random_configs(lemma, samples, seed)
    C1, C2, inner = _integrals(times, c1, c2)
    log_bound = _log_bound(lemma, c0, C1, C2, inner)
    z, substeps, change = _solve_ode(lemma, np.log(c0), times, c1, c2, 4)
    logger.debug("%s suite: %d substeps, refinement change %.3e", lemma, substeps, change)
    return InequalityReport.from_sides(
        lemma,
        z + np.log1p(-1e-6),
        log_bound,
        {"c0": c0, "t": t},
        atol=0.0,
        rtol=0.0,
    )


def monotonicity_report(
    lemma: str, samples: int = 200, seed: int = 0, step: float = 1e-3
) -> List[InequalityReport]:
    """The bound does not decrease when c0, c1 or t grows."""
    c0, t, times, c1, c2 = _random_configs(lemma, samples, seed)

    def log_bound(c0, times, c1, c2):
        return _log_bound(lemma, c0, *_integrals(times, c1, c2))

    base = log_bound(c0, times, c1, c2)
    # the bound at every node along the same tabulation
    C1 = cumulative_trapezoid(c1, times, axis=-1, initial=0)
    C2 = cumulative_trapezoid(c2, times, axis=-1, initial=0)
    inner = cumulative_trapezoid(c1 * np.exp(-C2), times, axis=-1, initial=0)
    along = _log_bound(lemma, c0[:, None], C1, C2, inner)
    points = {"c0": c0, "t": t}
    return [
        InequalityReport.from_sides(
            f"{lemma}:c0", base, log_bound(c0 * (1.0 + step), times, c1, c2), points
        ),
        InequalityReport.from_sides(f"{lemma}:c1", base, log_bound(c0, times, c1 + step, c2), points),
        InequalityReport.from_sides(
            f"{lemma}:t", along[:, :-1], along[:, 1:], {"t": times[:, 1:], "c0": c0[:, None]}
        ),
    ]
