"""Drift and diffusion coefficients.

A small catalog of (b, sigma) pairs tagged with the hypothesis they satisfy,
the mollification b_n = (b * phi_n) eta_n that turns a log-Lipschitz drift
into a globally Lipschitz one, and randomized verification of the declared
constants.
"""
import copy
import enum
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .checks.base import InequalityReport, merge_reports
from .exceptions import DomainError, NumericalError, UnknownCoefficientError
from .weights_metrics import log_plus

__all__ = [
    "Regime",
    "CoefficientSet",
    "bump",
    "bump_normalization",
    "cutoff",
    "mollify",
    "verify_h1_growth",
    "verify_h1_log_lipschitz",
    "verify_h1_sigma",
    "verify_h0",
    "verify_mollified_bounds",
    "verify_affine_preservation",
    "growth_constants_from_log_lipschitz",
    "linear_coefficients",
    "builtin",
    "CATALOG",
]

logger = logging.getLogger(__name__)

MOLLIFIER_NODES = 64
SAMPLE_MAGNITUDE = 1e3
ROUNDING = 4.0 * np.finfo(float).eps


class Regime(enum.Enum):
    H0_LIPSCHITZ = "H0_Lipschitz"
    H1_LOG_LIPSCHITZ = "H1_LogLipschitz"


Scalar = Callable[[np.ndarray], np.ndarray]


@dataclass
class CoefficientSet:
    """A drift/diffusion pair.

    ``constants`` holds ``L`` (Lipschitz) and ``L_growth`` in the H0 regime,
    ``c1`` .. ``c5``, ``L_sigma``, ``K_sigma`` and ``L_b`` in the H1 regime.
    The derivative callables feed the adjoint of the rate optimizer.
    """

    name: str
    b: Scalar
    sigma: Scalar
    regime: Regime
    constants: Dict[str, float] = field(default_factory=dict)
    b_prime: Optional[Scalar] = None
    sigma_prime: Optional[Scalar] = None

    @property
    def lipschitz_constant(self) -> float:
        if self.regime is not Regime.H0_LIPSCHITZ:
            raise DomainError(f"'{self.name}' is not globally Lipschitz")
        return self.constants["L"]

    def mollified(self, n: int) -> "CoefficientSet":
        """The Lipschitz approximation (b_n, sigma_n)."""
        b_n = mollify(self.b, n, self.b_prime)
        sigma_n = mollify(self.sigma, n, self.sigma_prime)
        reach = np.linspace(-(n + 3.0), n + 3.0, 8001)
        lipschitz = float(
            np.max(np.abs(b_n.derivative(reach))) + np.max(np.abs(sigma_n.derivative(reach)))
        )
        growth = float(np.max((np.abs(b_n(reach)) + np.abs(sigma_n(reach))) / (1 + np.abs(reach))))
        return CoefficientSet(
            name=f"{self.name}[n={n}]",
            b=b_n,
            sigma=sigma_n,
            regime=Regime.H0_LIPSCHITZ,
            constants={"L": lipschitz, "L_growth": growth, "n": n},
            b_prime=b_n.derivative,
            sigma_prime=sigma_n.derivative,
        )


def bump(x):
    """exp(-1/(1-x^2)) on (-1, 1), zero elsewhere; not normalized."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1
    safe = np.where(inside, x, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - safe**2)), 0.0)


@lru_cache(maxsize=1)
def bump_normalization() -> float:
    """The constant C with C * int bump = 1."""
    value, error = quad(bump, -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    if error > 1e-10:
        raise NumericalError("bump normalization did not converge", {"error": error})
    return 1.0 / value


@lru_cache(maxsize=4)
def _mollifier_rule(order: int = MOLLIFIER_NODES):
    """Nodes z_i in (-1, 1) and weights w_i phi(z_i) summing to one exactly."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    masses = weights * bump(nodes)
    return nodes, masses / masses.sum()


def _smoothstep(u):
    """int_{-1}^{2u-1} phi, clipped to 0 below u = 0 and 1 above u = 1."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    upper = 2.0 * u - 1.0
    nodes, weights = np.polynomial.legendre.leggauss(32)
    half = 0.5 * (upper + 1.0)
    z = -1.0 + half[..., None] * (nodes + 1.0)
    total = bump(nodes) @ weights
    return np.clip(half * (bump(z) @ weights) / total, 0.0, 1.0)


def _smoothstep_prime(u):
    u = np.asarray(u, dtype=float)
    return 2.0 * bump(2.0 * u - 1.0) * bump_normalization()


def cutoff(x, n: int):
    """eta_n: 1 on [-n, n], 0 outside (-(n+2), n+2), smooth in between."""
    return _smoothstep((n + 2.0 - np.abs(np.asarray(x, dtype=float))) / 2.0)


def _cutoff_prime(x, n: int):
    x = np.asarray(x, dtype=float)
    return -0.5 * np.sign(x) * _smoothstep_prime((n + 2.0 - np.abs(x)) / 2.0)


class mollify:
    """x -> n int b(y) phi(n(x - y)) dy * eta_n(x).

    The convolution runs over the support (x - 1/n, x + 1/n) with a fixed
    Gauss-Legendre rule whose weights are normalized discretely, so affine
    functions are reproduced to rounding on |x| <= n.
    """

    def __init__(self, fn: Scalar, n: int, fn_prime: Optional[Scalar] = None):
        if n < 1:
            raise DomainError(f"mollification index must be >= 1, got {n}")
        self.fn = fn
        self.n = int(n)
        self.fn_prime = fn_prime

    def _convolve(self, fn, x):
        nodes, masses = _mollifier_rule()
        x = np.asarray(x, dtype=float)
        values = fn(x[..., None] - nodes / self.n)
        if not np.all(np.isfinite(values)):
            raise NumericalError(
                "mollifier quadrature hit non-finite coefficient values", {"n": self.n}
            )
        return values @ masses

    def __call__(self, x):
        return self._convolve(self.fn, x) * cutoff(x, self.n)

    def derivative(self, x):
        if self.fn_prime is None:
            raise DomainError("derivative needs the derivative of the mollified function")
        return self._convolve(self.fn_prime, x) * cutoff(x, self.n) + self._convolve(
            self.fn, x
        ) * _cutoff_prime(x, self.n)


def _sample_points(rng: np.random.Generator, size: int) -> np.ndarray:
    """Log-uniform magnitudes up to 1e3 mixed with fine meshes around 0 and +-1."""
    magnitudes = 10.0 ** rng.uniform(-6.0, np.log10(SAMPLE_MAGNITUDE), size)
    u = rng.choice([-1.0, 1.0], size) * magnitudes
    mesh = rng.random(size) < 0.2
    near = rng.choice([-1.0, 0.0, 1.0], size) + rng.uniform(-1e-2, 1e-2, size)
    return np.where(mesh, near, u)


def _sample_pairs(rng: np.random.Generator, size: int):
    u = _sample_points(rng, size)
    gap = rng.choice([-1.0, 1.0], size) * 10.0 ** rng.uniform(-10.0, 0.0, size)
    close = u + gap * np.maximum(1.0, np.abs(u))
    v = np.where(rng.random(size) < 0.5, close, _sample_points(rng, size))
    return u, v


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream]))


def verify_h1_growth(b: Scalar, c1: float, c2: float, samples: int, seed: int = 0):
    """|b(u)| <= c1 |u| log+|u| + c2 on sampled u."""
    if samples <= 0:
        raise DomainError("need samples > 0")
    u = _sample_points(_rng(seed, 31), samples)
    lhs = np.abs(b(u))
    rhs = c1 * np.abs(u) * log_plus(np.abs(u)) + c2
    return InequalityReport.from_sides("h1a", lhs, rhs, {"u": u})


def verify_h1_log_lipschitz(
    b: Scalar, c3: float, c4: float, c5: float, sample_pairs: int, seed: int = 0
):
    """|b(u) - b(v)| <= c3 d log+(1/d) + c4 log+(|u| v |v|) d + c5 d, d = |u - v|."""
    if sample_pairs <= 0:
        raise DomainError("need sample_pairs > 0")
    u, v = _sample_pairs(_rng(seed, 32), sample_pairs)
    bu, bv = b(u), b(v)
    d = np.abs(u - v)
    with np.errstate(divide="ignore"):
        inverse = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    rhs = (
        c3 * d * log_plus(inverse)
        + c4 * log_plus(np.maximum(np.abs(u), np.abs(v))) * d
        + c5 * d
        + ROUNDING * (np.abs(bu) + np.abs(bv))
    )
    return InequalityReport.from_sides("h1b", np.abs(bu - bv), rhs, {"u": u, "v": v})


def verify_h1_sigma(
    sigma: Scalar, L_sigma: float, K_sigma: float, samples: int, seed: int = 0
) -> List[InequalityReport]:
    u, v = _sample_pairs(_rng(seed, 33), samples)
    su, sv = sigma(u), sigma(v)
    return [
        InequalityReport.from_sides(
            "h1c_lipschitz",
            np.abs(su - sv),
            L_sigma * np.abs(u - v) + ROUNDING * (np.abs(su) + np.abs(sv)),
            {"u": u, "v": v},
        ),
        InequalityReport.from_sides("h1c_bound", np.abs(su), np.full_like(su, K_sigma), {"u": u}),
    ]


def verify_h0(coeff: CoefficientSet, samples: int, seed: int = 0) -> List[InequalityReport]:
    """H0(a) linear growth and H0(b) joint Lipschitz bound of b and sigma."""
    lipschitz = coeff.constants["L"]
    growth = coeff.constants.get("L_growth", lipschitz)
    u, v = _sample_pairs(_rng(seed, 34), samples)
    bu, bv, su, sv = coeff.b(u), coeff.b(v), coeff.sigma(u), coeff.sigma(v)
    scale = np.abs(bu) + np.abs(bv) + np.abs(su) + np.abs(sv)
    return [
        InequalityReport.from_sides(
            "h0a", np.abs(bu) + np.abs(su), growth * (1.0 + np.abs(u)), {"u": u}
        ),
        InequalityReport.from_sides(
            "h0b",
            np.abs(bu - bv) + np.abs(su - sv),
            lipschitz * np.abs(u - v) + ROUNDING * scale,
            {"u": u, "v": v},
        ),
    ]


def verify_mollified_bounds(
    coeff: CoefficientSet,
    n_list: Sequence[int] = (1, 2, 4, 8, 16, 32),
    samples: int = 2000,
    seed: int = 0,
) -> List[InequalityReport]:
    """|b_n(x)| <= c1 |x| log+|x| + L_b (|x| + 1) and |sigma_n| <= K_sigma uniformly in n.

    L_b is fitted once over a dense x grid and all n, then frozen (with a 1%
    margin) before the randomized check.
    """
    c1 = coeff.constants.get("c1", 0.0)
    K_sigma = coeff.constants.get("K_sigma", coeff.constants.get("L_growth", np.inf))
    reach = max(n_list) + 3.0
    dense = np.linspace(-reach, reach, 20001)
    fitted = 0.0
    for n in n_list:
        residual = np.abs(mollify(coeff.b, n)(dense)) - c1 * np.abs(dense) * log_plus(
            np.abs(dense)
        )
        fitted = max(fitted, float(np.max(residual / (np.abs(dense) + 1.0))))
    L_b = 1.01 * max(fitted, 0.0) + 1e-12
    rng = _rng(seed, 36)
    reports_b, reports_sigma = [], []
    for n in n_list:
        x = rng.uniform(-reach, reach, samples)
        b_n = np.abs(mollify(coeff.b, n)(x))
        sigma_n = np.abs(mollify(coeff.sigma, n)(x))
        points = {"x": x, "n": float(n), "L_b": L_b}
        reports_b.append(
            InequalityReport.from_sides(
                "bn2", b_n, c1 * np.abs(x) * log_plus(np.abs(x)) + L_b * (np.abs(x) + 1), points
            )
        )
        reports_sigma.append(
            InequalityReport.from_sides("sigman2", sigma_n, np.full_like(x, K_sigma), points)
        )
    logger.info("fitted L_b=%.6g for '%s' over n=%s", L_b, coeff.name, list(n_list))
    return [merge_reports(reports_b), merge_reports(reports_sigma)]


def verify_affine_preservation(
    n_list: Sequence[int] = (1, 2, 4, 8, 16), samples: int = 2000, seed: int = 0, tol=1e-8
) -> InequalityReport:
    """mollify(a u + c, n)(x) == a x + c on |x| <= n."""
    rng = _rng(seed, 37)
    reports = []
    for n in n_list:
        a, c = rng.normal(size=2)
        x = rng.uniform(-n, n, samples)
        b_n = mollify(lambda u: a * u + c, n)(x)
        reports.append(
            InequalityReport.from_sides(
                "affine",
                np.abs(b_n - (a * x + c)),
                np.full_like(x, tol),
                {"x": x, "n": float(n)},
                atol=0.0,
                rtol=0.0,
            )
        )
    return merge_reports(reports)


def growth_constants_from_log_lipschitz(c3: float, c4: float, c5: float, b0: float):
    """(c1, c2) of H1(a) implied by H1(b) with v = 0 and |b(0)| = b0."""
    return c4 + c5, abs(b0) + c3 / np.e + c5 * np.e


def _ulogu(u):
    u = np.asarray(u, dtype=float)
    magnitude = np.abs(u)
    safe = np.where(magnitude > 0, magnitude, 1.0)
    return np.where(magnitude > 0, u * np.log(safe), 0.0)


def _ulogu_prime(u):
    return np.log(np.maximum(np.abs(np.asarray(u, dtype=float)), 1e-12)) + 1.0


def _constant(value):
    return lambda u: np.full_like(np.asarray(u, dtype=float), value)


def linear_coefficients(a: float = -0.5, sigma0: float = 1.0) -> CoefficientSet:
    """b(u) = a u with constant diffusion sigma0."""
    return CoefficientSet(
        name="linear",
        b=lambda u: a * np.asarray(u, dtype=float),
        sigma=_constant(sigma0),
        regime=Regime.H0_LIPSCHITZ,
        constants={"L": abs(a), "L_growth": max(abs(a), abs(sigma0)), "a": a, "sigma0": sigma0},
        b_prime=_constant(a),
        sigma_prime=_constant(0.0),
    )


def _zero_drift_unit_sigma():
    return CoefficientSet(
        name="zero_drift_unit_sigma",
        b=_constant(0.0),
        sigma=_constant(1.0),
        regime=Regime.H0_LIPSCHITZ,
        constants={"L": 0.0, "L_growth": 1.0},
        b_prime=_constant(0.0),
        sigma_prime=_constant(0.0),
    )


def _ulogu_bounded_sigma():
    return CoefficientSet(
        name="ulogu_bounded_sigma",
        b=_ulogu,
        sigma=lambda u: 1.0 + np.arctan(u) / np.pi,
        regime=Regime.H1_LOG_LIPSCHITZ,
        constants={
            "c1": 1.0,
            "c2": 1.0 / np.e,
            "c3": 1.0,
            "c4": 1.0,
            "c5": 1.0 + np.log(2.0),
            "L_sigma": 1.0 / np.pi,
            "K_sigma": 1.5,
            "L_b": 2.0,
        },
        b_prime=_ulogu_prime,
        sigma_prime=lambda u: 1.0 / (np.pi * (1.0 + np.asarray(u, dtype=float) ** 2)),
    )


def _lipschitz_tanh():
    return CoefficientSet(
        name="lipschitz_tanh",
        b=np.tanh,
        sigma=lambda u: 1.0 + 0.5 * np.tanh(u),
        regime=Regime.H0_LIPSCHITZ,
        constants={"L": 1.5, "L_growth": 2.5},
        b_prime=lambda u: 1.0 / np.cosh(u) ** 2,
        sigma_prime=lambda u: 0.5 / np.cosh(u) ** 2,
    )


CATALOG = {
    "zero_drift_unit_sigma": _zero_drift_unit_sigma,
    "linear": linear_coefficients,
    "ulogu_bounded_sigma": _ulogu_bounded_sigma,
    "lipschitz_tanh": _lipschitz_tanh,
}


def verify(coeff: CoefficientSet, samples: int = 2000, seed: int = 0) -> List[InequalityReport]:
    """Every hypothesis report applicable to the regime of ``coeff``."""
    if coeff.regime is Regime.H0_LIPSCHITZ:
        return verify_h0(coeff, samples, seed)
    k = coeff.constants
    return [
        verify_h1_growth(coeff.b, k["c1"], k["c2"], samples, seed),
        verify_h1_log_lipschitz(coeff.b, k["c3"], k["c4"], k["c5"], samples, seed),
        *verify_h1_sigma(coeff.sigma, k["L_sigma"], k["K_sigma"], samples, seed),
    ]


@lru_cache(maxsize=None)
def _verified(name: str) -> CoefficientSet:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise UnknownCoefficientError(
            f"unknown coefficient set '{name}', choose from {', '.join(sorted(CATALOG))}"
        )
    coeff = factory()
    failed = [report for report in verify(coeff) if not report.ok]
    if failed:
        raise NumericalError(
            f"declared constants of '{name}' fail verification",
            {report.inequality_id: report.worst_point for report in failed},
        )
    return coeff


def builtin(name: str) -> CoefficientSet:
    """A catalog entry with its declared constants verified on samples.

    Verification runs once per name; every call returns a fresh copy.
    """
    return copy.deepcopy(_verified(name))
