import numpy as np
import pytest

from fw_srde.exceptions import (
    DomainError,
    IncompatibleTargetError,
    NonConvergenceError,
    NonInvertibleError,
)
from fw_srde.grid import ControlField, Field, Trajectory
from fw_srde.noise import convolution_variance
from fw_srde.rate_function import (
    EndpointEvent,
    EndpointObjective,
    OptimizerConfig,
    energy,
    finite_difference_gradient_check,
    invert_control,
    minimize_rate_endpoint,
)
from fw_srde.skeleton_solver import solve_skeleton_scan

from . import factories


@pytest.fixture
def bump(grid):
    return factories.FieldFactory(grid=grid)


@pytest.fixture
def control(grid):
    return factories.ControlFieldFactory(grid=grid)


def gaussian_rate(a, grid):
    return a**2 / (2.0 * convolution_variance(grid))


def test_event_parse():
    assert EndpointEvent.parse("1.5,0,1") == EndpointEvent(x0=0.0, a=1.5, T=1.0)
    with pytest.raises(DomainError):
        EndpointEvent.parse("1.5,0")


def test_event_check(grid):
    EndpointEvent(0.0, 1.0, 1.0).check(grid)
    with pytest.raises(DomainError):
        EndpointEvent(0.0, 1.0, 2.0).check(grid)
    with pytest.raises(DomainError):
        EndpointEvent(9.0, 1.0, 1.0).check(grid)


def test_energy(control):
    assert energy(control) == control.energy
    # 1/2 int_0^1 int exp(-2 x^2) dx dt
    assert energy(control) == pytest.approx(0.5 * np.sqrt(np.pi / 2.0), rel=1e-6)


def test_inversion_round_trip(grid, bump, control):
    coeffs = factories.CoefficientSetFactory()
    target = solve_skeleton_scan(coeffs, bump, control)
    h, residual = invert_control(target, coeffs, bump)
    np.testing.assert_allclose(h.values, control.values, atol=1e-8)
    assert energy(h) == pytest.approx(energy(control), rel=1e-8)
    assert residual < 1e-10


def test_inversion_of_heat_flow(linear, bump):
    target = solve_skeleton_scan(linear, bump)
    h, residual = invert_control(target, linear, bump)
    np.testing.assert_allclose(h.values, 0.0, atol=1e-10)
    assert residual < 1e-10


def test_inversion_of_a_jump(grid, linear, zero_field):
    """A spatial jump: exact for the discrete inverse, off for centered differences."""
    step = (np.abs(grid.x) < 1.0).astype(float)
    target = Trajectory(grid, grid.times[:, None] * step[None, :])
    _, exact = invert_control(target, linear, zero_field)
    _, centered = invert_control(target, linear, zero_field, method="centered")
    assert exact < 1e-9
    assert centered > 1e-2


def test_inversion_defaults_to_discrete(grid, linear, zero_field):
    step = (np.abs(grid.x) < 1.0).astype(float)
    target = Trajectory(grid, grid.times[:, None] * step[None, :])
    h_default, residual_default = invert_control(target, linear, zero_field)
    h_discrete, residual_discrete = invert_control(target, linear, zero_field, method="discrete")
    np.testing.assert_array_equal(h_default.values, h_discrete.values)
    assert residual_default == residual_discrete


def test_centered_inversion_of_smooth_target(fine_grid, linear):
    """Smooth targets are matched by both inversions to discretization order."""
    u0 = Field(fine_grid, np.exp(-(fine_grid.x**2)))
    target = Trajectory(
        fine_grid,
        (1.0 + 0.5 * fine_grid.times[:, None]) * u0.values[None, :],
    )
    h_discrete, _ = invert_control(target, linear, u0)
    h_centered, residual = invert_control(target, linear, u0, method="centered")
    assert energy(h_centered) == pytest.approx(energy(h_discrete), rel=0.05)
    assert residual < 0.05


def test_inversion_rejects_wrong_start(grid, linear, bump):
    target = solve_skeleton_scan(linear, bump)
    with pytest.raises(IncompatibleTargetError):
        invert_control(target, linear, Field(grid, bump.values + 0.1))


def test_inversion_rejects_vanishing_sigma(grid, bump, control):
    coeffs = factories.CoefficientSetFactory(sigma=lambda u: 0.0 * np.asarray(u))
    target = solve_skeleton_scan(factories.CoefficientSetFactory(), bump, control)
    with pytest.raises(NonInvertibleError):
        invert_control(target, coeffs, bump)


def test_inversion_unknown_method(linear, bump):
    with pytest.raises(DomainError):
        invert_control(solve_skeleton_scan(linear, bump), linear, bump, method="spectral")


def test_objective_rejects(grid, linear, bump):
    event = EndpointEvent(0.0, 1.0, grid.T)
    with pytest.raises(DomainError):
        EndpointObjective(linear, bump, event, -1.0)
    coeffs = factories.CoefficientSetFactory(b_prime=None)
    with pytest.raises(DomainError):
        EndpointObjective(coeffs, bump, event, 1.0)


def test_gradient_without_penalty_is_control(grid, tanh, bump, control):
    objective = EndpointObjective(tanh, bump, EndpointEvent(0.0, 1.0, grid.T), 0.0)
    value, gradient, _ = objective.value_and_gradient(control.values)
    np.testing.assert_array_equal(gradient, control.values)
    assert value == pytest.approx(control.energy)


def test_gradient_check_linear(grid, linear, zero_field, control):
    report = finite_difference_gradient_check(
        control, linear, zero_field, EndpointEvent(0.0, 1.0, grid.T), probes=10
    )
    assert report.probes == 10
    assert report.max_relative_error < 1e-6


def test_gradient_check_nonlinear(grid, ulogu, control):
    """u log u with sigma(u) = 1 + arctan(u) / pi, away from u = 0."""
    u0 = Field(grid, np.full(grid.n_x, 1.5))
    report = finite_difference_gradient_check(
        control, ulogu, u0, EndpointEvent(0.5, 2.0, grid.T), probes=10, seed=3
    )
    assert report.ok, report.as_dict()


def test_optimizer_config():
    assert OptimizerConfig().schedule == [10.0, 100.0, 1e3, 1e4, 1e5]
    assert OptimizerConfig().as_dict()["method"] == "gradient_descent"
    for kwargs in ({"method": "newton"}, {"armijo": 0.7}, {"rounds": 0}, {"restarts": -1}):
        with pytest.raises(DomainError):
            OptimizerConfig(**kwargs)


def test_linear_rate(grid, linear, zero_field):
    result = minimize_rate_endpoint(linear, zero_field, EndpointEvent(0.0, 1.0, grid.T))
    assert result.rate == pytest.approx(gaussian_rate(1.0, grid), rel=1e-2)
    assert result.control.energy == result.rate
    assert result.history[-1]["violation"] < 1e-3
    assert [row["round"] for row in result.history] == list(range(len(result.history)))


def test_linear_rate_scales_quadratically(grid, linear, zero_field):
    one = minimize_rate_endpoint(linear, zero_field, EndpointEvent(0.0, 1.0, grid.T))
    two = minimize_rate_endpoint(linear, zero_field, EndpointEvent(0.0, 2.0, grid.T))
    assert two.rate == pytest.approx(4.0 * one.rate, rel=1e-2)


def test_trivial_event_costs_nothing(grid, linear, zero_field):
    result = minimize_rate_endpoint(linear, zero_field, EndpointEvent(0.0, 0.0, grid.T))
    assert result.rate == 0.0
    assert len(result.history) == 1


def test_lbfgs_with_restarts(grid, linear, zero_field):
    opt = OptimizerConfig(method="lbfgs", restarts=2, workers=2, seed=5)
    result = minimize_rate_endpoint(linear, zero_field, EndpointEvent(0.0, 1.0, grid.T), opt)
    assert result.rate == pytest.approx(gaussian_rate(1.0, grid), rel=1e-2)
    assert {row["start"] for row in result.history} == {0, 1, 2}


def test_target_bound(grid, linear, zero_field):
    event = EndpointEvent(0.0, 1.0, grid.T)
    first = minimize_rate_endpoint(linear, zero_field, event)
    target = solve_skeleton_scan(linear, zero_field, first.control)
    bounded = minimize_rate_endpoint(linear, zero_field, event, target=target)
    assert bounded.rate == pytest.approx(first.rate, rel=1e-6)


def test_infeasible_schedule(grid, linear, zero_field):
    opt = OptimizerConfig(mu0=1.0, rounds=1)
    with pytest.raises(NonConvergenceError) as e:
        minimize_rate_endpoint(linear, zero_field, EndpointEvent(0.0, 1.0, grid.T), opt)
    assert isinstance(e.value.best, ControlField)
    assert e.value.residual > 1e-3
    assert len(e.value.history) == 1
