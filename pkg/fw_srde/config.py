from functools import partial
from typing import List

from .checks.base import BaseCheck, CheckContext, CheckLevel, SuiteCheck
from .coefficients import (
    CATALOG,
    Regime,
    verify_affine_preservation,
    verify_h0,
    verify_h1_growth,
    verify_h1_log_lipschitz,
    verify_h1_sigma,
    verify_mollified_bounds,
)
from .exceptions import DomainError, UnknownCoefficientError
from .gronwall import LEMMAS, gronwall_suite, monotonicity_report
from .heat_kernel import INEQUALITY_IDS, kernel_inequality_suite, kernel_mass_report
from .weights_metrics import metric_axioms_report, t_star_root_report

__all__ = ["Config", "CHECKS", "SUITES"]

SUITES = ("heat_kernel", "gronwall", "hypotheses", "metrics")


def _kernel_inequality(inequality_id: str, context: CheckContext):
    return kernel_inequality_suite(
        context.samples, context.seed, (inequality_id,), context.workers
    )


def _coefficient_sets(context: CheckContext, regime: Regime):
    """Catalog entries of one regime, unverified, or the one named in the context."""
    names = sorted(CATALOG) if context.coeff is None else [context.coeff]
    sets = []
    for name in names:
        if name not in CATALOG:
            raise UnknownCoefficientError(f"unknown coefficient set '{name}'")
        coeff = CATALOG[name]()
        if coeff.regime is regime:
            sets.append(coeff)
    return sets


def _h1(context: CheckContext, verifier):
    reports = []
    for coeff in _coefficient_sets(context, Regime.H1_LOG_LIPSCHITZ):
        outcome = verifier(coeff, context)
        reports += outcome if isinstance(outcome, list) else [outcome]
    return reports


def _h0(context: CheckContext):
    reports = []
    for coeff in _coefficient_sets(context, Regime.H0_LIPSCHITZ):
        reports += verify_h0(coeff, context.samples, context.seed)
    return reports


CHECKS: List[BaseCheck] = []

# Error codes 11 to 19: heat kernel
CHECKS += [
    SuiteCheck(
        suite="heat_kernel",
        error_code=11 + i,
        run=partial(_kernel_inequality, inequality_id),
        inequality_id=inequality_id,
        message=f"Weighted heat-kernel inequality ({inequality_id}) fails on sampled points.",
    )
    for i, inequality_id in enumerate(INEQUALITY_IDS)
]
CHECKS += [
    SuiteCheck(
        suite="heat_kernel",
        error_code=19,
        run=lambda context: [kernel_mass_report(context.samples, context.seed)],
        message="The heat kernel does not integrate to 1 in space.",
    )
]

# Error codes 21 to 24: Gronwall-type bounds
CHECKS += [
    SuiteCheck(
        suite="gronwall",
        error_code=21 + i,
        run=partial(
            lambda lemma, context: [gronwall_suite(lemma, context.configs, context.seed)], lemma
        ),
        message=f"The {lemma} Gronwall bound is exceeded by its worst-case ODE.",
    )
    for i, lemma in enumerate(LEMMAS)
]
CHECKS += [
    SuiteCheck(
        suite="gronwall",
        error_code=23 + i,
        level=CheckLevel.WARNING,
        run=partial(
            lambda lemma, context: monotonicity_report(lemma, context.configs, context.seed),
            lemma,
        ),
        message=f"The {lemma} Gronwall bound decreases in c0, c1 or t.",
    )
    for i, lemma in enumerate(LEMMAS)
]

# Error codes 31 to 37: coefficient hypotheses
CHECKS += [
    SuiteCheck(
        suite="hypotheses",
        error_code=31,
        run=partial(
            _h1,
            verifier=lambda coeff, context: verify_h1_growth(
                coeff.b, coeff.constants["c1"], coeff.constants["c2"], context.samples, context.seed
            ),
        ),
        message="Drift exceeds the log-growth bound c1 |u| log+|u| + c2.",
    ),
    SuiteCheck(
        suite="hypotheses",
        error_code=32,
        run=partial(
            _h1,
            verifier=lambda coeff, context: verify_h1_log_lipschitz(
                coeff.b,
                coeff.constants["c3"],
                coeff.constants["c4"],
                coeff.constants["c5"],
                context.samples,
                context.seed,
            ),
        ),
        message="Drift violates the log-Lipschitz modulus with the declared c3, c4, c5.",
    ),
    SuiteCheck(
        suite="hypotheses",
        error_code=33,
        run=partial(
            _h1,
            verifier=lambda coeff, context: verify_h1_sigma(
                coeff.sigma,
                coeff.constants["L_sigma"],
                coeff.constants["K_sigma"],
                context.samples,
                context.seed,
            ),
        ),
        message="Diffusion is not Lipschitz and bounded with the declared constants.",
    ),
    SuiteCheck(
        suite="hypotheses",
        error_code=34,
        run=_h0,
        inequality_id="h0b",
        message="Coefficients exceed their declared global Lipschitz constant.",
    ),
    SuiteCheck(
        suite="hypotheses",
        error_code=35,
        run=_h0,
        inequality_id="h0a",
        message="Coefficients exceed their declared linear growth bound.",
    ),
    SuiteCheck(
        suite="hypotheses",
        error_code=36,
        run=partial(
            _h1,
            verifier=lambda coeff, context: verify_mollified_bounds(
                coeff, samples=context.samples, seed=context.seed
            ),
        ),
        message="Mollified coefficients are not bounded uniformly in n.",
    ),
    SuiteCheck(
        suite="hypotheses",
        error_code=37,
        run=lambda context: [
            verify_affine_preservation(samples=context.samples, seed=context.seed)
        ],
        message="Mollification does not preserve affine functions on |x| <= n.",
    ),
]

# Error codes 41 and 42: weights and metrics
CHECKS += [
    SuiteCheck(
        suite="metrics",
        error_code=41,
        run=lambda context: [t_star_root_report(context.samples, context.seed)],
        message="The weight horizon T* does not solve its defining equation.",
    ),
    SuiteCheck(
        suite="metrics",
        error_code=42,
        level=CheckLevel.WARNING,
        run=lambda context: metric_axioms_report(context.samples, context.seed),
        message="The tempered metric violates identity, symmetry or the triangle inequality.",
    ),
]


class Config:
    """Collection of checks"""

    def __init__(self, checks=None):
        self.checks = list(CHECKS if checks is None else checks)

    @property
    def suites(self):
        return sorted({check.suite for check in self.checks})

    def iter_checks(self, level=CheckLevel.ERROR, ignore_checks=None, suites=None):
        """Iterate over checks with at least 'level', optionally of some suites only"""
        level = CheckLevel.get(level)  # normalize
        if suites:
            unknown = set(suites) - set(SUITES)
            if unknown:
                raise DomainError(f"unknown suites {sorted(unknown)}, choose from {SUITES}")
        for check in self.checks:
            if suites and check.suite not in suites:
                continue
            if check.level >= level:
                if ignore_checks:
                    if not ignore_checks.match(str(check.error_code).zfill(4)):
                        yield check
                else:
                    yield check
