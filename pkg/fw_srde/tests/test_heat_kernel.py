import numpy as np
import pytest

from fw_srde.exceptions import DomainError
from fw_srde.grid import Field, GridSpec
from fw_srde.heat_kernel import (
    INEQUALITY_IDS,
    forcing_multiplier,
    heat_multiplier,
    inequality_sides,
    kernel_inequality_suite,
    kernel_mass_report,
    kernel_value,
    semigroup_apply,
    weighted_kernel_integrals,
    weighted_mass_closed_form,
)


def test_kernel_value_peak():
    assert kernel_value(1.0, 0.0, 0.0) == pytest.approx(1.0 / np.sqrt(2.0 * np.pi))


def test_kernel_value_symmetric():
    assert kernel_value(0.3, 1.0, -2.0) == kernel_value(0.3, -2.0, 1.0)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_kernel_value_needs_positive_time(t):
    with pytest.raises(DomainError):
        kernel_value(t, 0.0, 0.0)


@pytest.mark.parametrize("periodic", [True, False])
def test_semigroup_of_gaussian(periodic):
    """P_t maps the N(0, 1) density to the N(0, 1 + t) density."""
    grid = GridSpec(n_x=128, periodic_extension=periodic)
    f = Field(grid, kernel_value(1.0, grid.x, 0.0))
    out = semigroup_apply(f, 0.5)
    np.testing.assert_allclose(out.values, kernel_value(1.5, grid.x, 0.0), atol=1e-8)


@pytest.mark.parametrize("m", [1, 4, 16])
def test_semigroup_of_sine(grid, m):
    """sin(k x) is an eigenfunction: P_t sin(k x) = exp(-k^2 t / 2) sin(k x)."""
    k = np.pi * m / grid.half_width
    out = semigroup_apply(Field(grid, np.sin(k * grid.x)), 0.3)
    expected = np.exp(-(k**2) * 0.3 / 2) * np.sin(k * grid.x)
    np.testing.assert_allclose(out.values, expected, atol=1e-10)


def test_semigroup_preserves_constants(grid):
    out = semigroup_apply(Field(grid, np.full(grid.n_x, 3.0)), 0.7)
    np.testing.assert_allclose(out.values, 3.0)


def test_semigroup_identity_and_domain(grid):
    f = Field(grid, np.exp(-grid.x**2))
    np.testing.assert_array_equal(semigroup_apply(f, 0.0).values, f.values)
    with pytest.raises(DomainError):
        semigroup_apply(f, -0.1)


def test_semigroup_property(grid):
    f = Field(grid, np.exp(-np.abs(grid.x)))
    twice = semigroup_apply(semigroup_apply(f, 0.2), 0.3)
    np.testing.assert_allclose(twice.values, semigroup_apply(f, 0.5).values, atol=1e-12)


def test_multipliers_at_zero_frequency(grid):
    assert heat_multiplier(grid, 0.4)[0] == 1.0
    assert forcing_multiplier(grid)[0] == 1.0
    assert np.all(np.diff(forcing_multiplier(grid)) < 0)


@pytest.mark.parametrize(
    "t,x,eta", [(0.1, 0.0, 0.5), (1.0, 3.0, 1.0), (4.0, -2.0, 2.0), (0.01, 5.0, 0.0)]
)
def test_weighted_integrals_against_closed_form(t, x, eta):
    integrals = weighted_kernel_integrals(t, x, eta)
    assert integrals["i"].exact == pytest.approx(weighted_mass_closed_form(t, x, eta), rel=1e-8)
    for value in integrals.values():
        assert value.exact <= value.bound
    assert ("iii" in integrals) == (eta > 0)


def test_weighted_integrals_zero_eta_is_mass():
    integrals = weighted_kernel_integrals(0.5, 1.0, 0.0)
    assert integrals["i"].exact == pytest.approx(1.0, abs=1e-9)
    # int p_t^2 = 1 / sqrt(4 pi t)
    assert integrals["ii"].exact == pytest.approx(1.0 / np.sqrt(2.0 * np.pi), rel=1e-8)


def test_weighted_integrals_need_positive_time():
    with pytest.raises(DomainError):
        weighted_kernel_integrals(0.0, 0.0, 1.0)


@pytest.mark.parametrize(
    "inequality_id,params",
    [
        ("i", {"t": 1.0, "x": 2.0, "eta": 1.0}),
        ("ii", {"t": 0.5, "x": -1.0, "eta": 0.5}),
        ("iii", {"t": 2.0, "x": 0.0, "eta": 1.5}),
        ("iv", {"t": 1.0, "s": 0.5, "x": 0.5, "y": -0.5, "theta": 0.5}),
        ("v", {"t": 1.0, "x": 0.0, "y": 1.0}),
        ("vi", {"t": 1.0, "x": 0.0, "y": 0.3, "eta": 1.0}),
        ("vii", {"t": 0.5, "x": 1.0, "y": 2.0, "eta": 0.5}),
        ("viii", {"t": 1.0, "s": 0.25, "x": 0.0, "y": 0.5}),
    ],
)
def test_inequality_sides_hold(inequality_id, params):
    lhs, rhs = inequality_sides(inequality_id, **params)
    assert np.all(np.asarray(lhs) <= np.asarray(rhs))


def test_inequality_sides_unknown():
    with pytest.raises(DomainError):
        inequality_sides("ix", t=1.0)


def test_kernel_suite_no_violations():
    reports = kernel_inequality_suite(600, seed=3)
    assert [r.inequality_id for r in reports] == list(INEQUALITY_IDS)
    for report in reports:
        assert report.samples == 600
        assert report.ok, report.as_dict()
        assert report.worst_slack >= 0


def test_kernel_suite_independent_of_workers():
    serial = kernel_inequality_suite(600, seed=1, inequality_ids=("ii", "vi"), workers=1)
    threaded = kernel_inequality_suite(600, seed=1, inequality_ids=("ii", "vi"), workers=3)
    assert [r.as_dict() for r in serial] == [r.as_dict() for r in threaded]


def test_kernel_suite_needs_samples():
    with pytest.raises(DomainError):
        kernel_inequality_suite(0)


def test_kernel_mass():
    report = kernel_mass_report(500, seed=2)
    assert report.ok
    assert report.inequality_id == "mass"
