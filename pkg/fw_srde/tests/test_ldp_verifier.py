import numpy as np
import pytest

from fw_srde.exceptions import DomainError
from fw_srde.grid import ControlField, Field, GridSpec, named_control
from fw_srde.ldp_verifier import (
    STREAM_BLOCK,
    C1Table,
    c1_experiment,
    c2_experiment,
    estimate_probability,
    ldp_curve,
    linear_gaussian_probability,
)
from fw_srde.noise import convolution_variance
from fw_srde.rate_function import EndpointEvent, minimize_rate_endpoint


@pytest.fixture
def event():
    return EndpointEvent(x0=0.0, a=1.0, T=1.0)


def test_gaussian_probability():
    assert linear_gaussian_probability(0.0, 0.3) == 0.5
    p = linear_gaussian_probability(1.0, 0.1)
    assert np.log(p) == pytest.approx(linear_gaussian_probability(1.0, 0.1, log=True))
    assert linear_gaussian_probability(1.0, 0.1, variance=0.5) < p
    with pytest.raises(DomainError):
        linear_gaussian_probability(1.0, 0.0)


def test_certain_event(grid, linear):
    estimate = estimate_probability(EndpointEvent(0.0, -100.0, 1.0), linear, 0.5, 100, grid=grid)
    assert estimate.p == 1.0
    assert estimate.log_p == pytest.approx(0.0)
    assert estimate.stderr == 0.0
    assert estimate.ess == pytest.approx(100.0)
    assert estimate.method == "plain"
    assert estimate.reliable


def test_plain_estimate_of_the_median(grid, linear):
    estimate = estimate_probability(EndpointEvent(0.0, 0.0, 1.0), linear, 1.0, 1000, grid=grid)
    assert estimate.p == pytest.approx(0.5, abs=0.06)
    assert estimate.ci_low < estimate.p < estimate.ci_high


def test_estimate_rejects(grid, linear, event):
    with pytest.raises(DomainError):
        estimate_probability(event, linear, 0.5, 10, grid=grid)
    with pytest.raises(DomainError):
        estimate_probability(event, linear, 0.0, 100, grid=grid)
    with pytest.raises(DomainError):
        estimate_probability(EndpointEvent(0.0, 1.0, 2.0), linear, 0.5, 100, grid=grid)


def test_tilted_estimate(grid, linear, zero_field, event):
    """The minimizing control as importance sampler against the exact Gaussian tail."""
    rate = minimize_rate_endpoint(linear, zero_field, event)
    eps = 0.2
    estimate = estimate_probability(event, linear, eps, 2000, tilt=rate.control, seed=7)
    exact = linear_gaussian_probability(1.0, eps, variance=convolution_variance(grid))
    assert estimate.method == "tilted"
    assert estimate.p == pytest.approx(exact, rel=0.15)
    assert estimate.reliable
    plain_variance = exact * (1.0 - exact) / 2000
    assert estimate.stderr**2 * 10 < plain_variance


def test_curve_of_the_median(grid, linear):
    curve = ldp_curve(
        EndpointEvent(0.0, 0.0, 1.0), linear, eps_list=(1.0, 0.5), n_samples=1000, grid=grid
    )
    assert curve.rate == 0.0
    assert [row["method"] for row in curve.rows] == ["plain", "plain"]
    for row in curve.rows:
        assert row["p"] == pytest.approx(0.5, abs=0.06)


def test_curve_switches_to_tilt(grid, linear, zero_field, event):
    rate = minimize_rate_endpoint(linear, zero_field, event)
    curve = ldp_curve(event, linear, eps_list=(0.5, 0.1), n_samples=500, rate=rate, u0=zero_field)
    assert [row["method"] for row in curve.rows] == ["plain", "tilted"]
    assert curve.rows[1]["reliable"]
    assert curve.rows[1]["minus_rate"] == -rate.rate
    assert curve.as_dict()["event"] == {"x0": 0.0, "a": 1.0, "T": 1.0}
    # eps log p sits below -I by the polynomial prefactor
    assert curve.rows[1]["eps_log_p"] < -rate.rate


def test_c1_without_perturbation(linear, zero_field, grid):
    table = c1_experiment(linear, zero_field, g=ControlField.zeros(grid))
    assert table.distances == [0.0] * 5
    assert table.exponent is None
    assert table.passed


def test_c1_decays(linear):
    grid = GridSpec(T=1.0, n_t=100, half_width=4.0, n_x=256)
    table = c1_experiment(linear, Field.zeros(grid), m_list=(1, 2, 4, 8, 16, 32))
    assert table.passed, table.as_dict()
    assert table.exponent >= 1.0
    # |sin(m x) g| <= |g| keeps the energies bounded
    assert max(table.energies) <= 0.5 * np.sqrt(np.pi / 2.0) * (1 + 1e-6)


def test_c2_vanishing_noise(linear, zero_field):
    table = c2_experiment(
        linear, zero_field, eps_list=(0.0, 0.1, 0.01, 0.001), n_samples=20, seed=1
    )
    assert table.means[0] == 0.0
    assert table.exceedances[0] == 0.0
    assert table.means[1] > table.means[2] > table.means[3]
    assert table.passed, table.as_dict()


def test_c2_needs_samples(linear, zero_field):
    with pytest.raises(DomainError):
        c2_experiment(linear, zero_field, n_samples=1)


def test_curve_stream_blocks(grid, linear):
    event = EndpointEvent(0.0, 0.0, 1.0)
    both = ldp_curve(event, linear, eps_list=(0.5, 1.0), n_samples=200, grid=grid)
    shifted = ldp_curve(
        event, linear, eps_list=(1.0,), n_samples=200, grid=grid, stream=STREAM_BLOCK
    )
    assert shifted.rows[0] == both.rows[1]


def test_c1_table_flags():
    m_list = [1, 2, 4, 8, 16]
    energies = [1.0] * 5
    rising_first = C1Table(m_list, [0.224, 0.333, 0.208, 0.044, 0.010], energies)
    assert not rising_first.monotone
    assert rising_first.passed
    assert rising_first.as_dict()["monotone"] is False
    bouncing = C1Table(m_list, [0.3, 0.2, 0.005, 0.01, 0.004], energies)
    assert not bouncing.monotone
    assert not bouncing.passed
    decaying = C1Table(m_list, [0.3, 0.2, 0.05, 0.01, 0.004], energies)
    assert decaying.monotone
    assert decaying.passed
    assert not C1Table(m_list, [0.3, 0.2, 0.1, 0.05, 0.02], energies).passed


def test_c1_decays_for_ulogu(ulogu):
    grid = GridSpec(T=1.0, n_t=100, half_width=4.0, n_x=256)
    table = c1_experiment(
        ulogu, Field.zeros(grid), named_control("bump", grid), m_list=(1, 2, 4, 8, 16, 32)
    )
    assert table.passed, table.as_dict()
    assert table.distances[-1] < 0.05 * max(table.distances)


def test_c2_vanishing_noise_for_ulogu(grid, ulogu, zero_field):
    table = c2_experiment(
        ulogu,
        zero_field,
        named_control("bump", grid),
        eps_list=(0.0, 0.01, 0.001, 0.0001),
        n_samples=20,
        seed=1,
    )
    assert table.means[0] == 0.0
    assert table.means[1] > table.means[2] > table.means[3]
    assert table.passed, table.as_dict()


def test_c2_stream_offsets(grid, linear, zero_field):
    both = c2_experiment(linear, zero_field, eps_list=(0.01, 0.01), n_samples=3)
    shifted = c2_experiment(linear, zero_field, eps_list=(0.01,), n_samples=3, stream=3)
    assert shifted.means[0] == both.means[1]
    assert both.means[0] != both.means[1]
