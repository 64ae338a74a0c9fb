import numpy as np
import pytest

from fw_srde.exceptions import DomainError, ShapeError
from fw_srde.grid import Field, GridSpec, Trajectory
from fw_srde.weights_metrics import (
    WeightParams,
    beta,
    log_plus,
    metric_axioms_report,
    path_metric,
    t_star,
    t_star_root_report,
    tem_metric,
    tem_norm,
    time_weighted_sup,
    weighted_sup_distance,
)


def test_log_plus():
    np.testing.assert_array_equal(log_plus(np.array([0.0, 0.5, 1.0])), 0.0)
    assert log_plus(np.e) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "kappa,lam,expected", [(1.0, 0.1, 4.0), (0.0, 4.0, 8.0), (0.5, 2.0, 2.0)]
)
def test_beta(kappa, lam, expected):
    assert beta(kappa, lam) == expected


@pytest.mark.parametrize("kappa,lam", [(1.0, 0.0), (1.0, -1.0), (-0.1, 1.0)])
def test_beta_domain(kappa, lam):
    with pytest.raises(DomainError):
        beta(kappa, lam)


def test_t_star_value():
    assert t_star(1.0, 0.1) == pytest.approx(1.0014058, abs=1e-4)


def test_t_star_grows_as_lambda_shrinks():
    horizons = [t_star(1.0, lam) for lam in (2.0, 1.0, 0.5, 0.1, 0.01)]
    assert all(np.isfinite(horizons))
    assert horizons == sorted(horizons)
    assert len(set(horizons)) == len(horizons)


def test_t_star_needs_kappa():
    with pytest.raises(DomainError):
        t_star(0.0, 1.0)


def test_weight_params():
    w = WeightParams(lam=0.1, kappa=1.0)
    assert w.beta == 4.0
    assert w.t_star == pytest.approx(t_star(1.0, 0.1))
    assert WeightParams(lam=1.0).t_star == np.inf
    assert WeightParams.lipschitz(2.0).weight(5.0, 1.0) == pytest.approx(np.exp(-2.0))


def test_tem_norm_of_exponential():
    grid = GridSpec(half_width=8.0, n_x=256)
    f = Field(grid, np.exp(np.abs(grid.x)))
    # |f|_(-lambda) is e^{(1 - lambda) L} at the window edge, 1 at the origin
    assert tem_norm(f, 2.0) == pytest.approx(1.0)
    assert tem_norm(f, 0.5) == pytest.approx(np.exp(0.5 * 8.0))
    with pytest.raises(DomainError):
        tem_norm(f, 0.0)


def test_tem_metric_bounds(grid):
    f = Field(grid, np.exp(-grid.x**2))
    far = Field(grid, 1e6 * np.ones(grid.n_x))
    assert tem_metric(f, f).value == 0.0
    # every term clamps at 1
    assert tem_metric(f, far).value == pytest.approx(1.0 - 0.5**20)
    assert tem_metric(f, far).series_error == 0.5**20


def test_tem_metric_shrinking_perturbation(grid):
    """d(f, f + s g) -> 0 together with every weighted norm of s g."""
    f = Field(grid, np.sin(grid.x))
    g = np.exp(np.abs(grid.x) / 2)
    values = [tem_metric(f, Field(grid, f.values + s * g)).value for s in (1.0, 1e-2, 1e-4)]
    assert values[0] > values[1] > values[2]
    assert values[2] < 1e-3


def test_tem_metric_grid_mismatch(grid):
    other = GridSpec(n_x=64)
    with pytest.raises(ShapeError):
        tem_metric(Field(grid, np.zeros(grid.n_x)), Field(other, np.zeros(64)))


def test_path_metric_is_sup_over_time(grid):
    values = np.zeros((grid.n_t + 1, grid.n_x))
    values[10] = 0.1
    F = Trajectory(grid, values)
    G = Trajectory(grid, np.zeros_like(values))
    expected = tem_metric(F.at(10), G.at(10)).value
    assert path_metric(F, G).value == pytest.approx(expected)


def test_path_metric_symmetry_and_triangle(grid):
    rng = np.random.default_rng(4)
    shape = (grid.n_t + 1, grid.n_x)
    for _ in range(20):
        F, G, H = (
            Trajectory(grid, rng.normal(scale=10.0 ** rng.uniform(-3, 1), size=shape))
            for _ in range(3)
        )
        assert path_metric(F, G).value == path_metric(G, F).value
        assert path_metric(F, H).value <= path_metric(F, G).value + path_metric(G, H).value + 1e-12


def test_time_weighted_sup(grid):
    values = np.ones((grid.n_t + 1, grid.n_x))
    F = Trajectory(grid, values)
    w = WeightParams.lipschitz(1.0)
    assert time_weighted_sup(F, w) == pytest.approx(1.0)
    assert weighted_sup_distance(F, F, w) == 0.0


def test_time_weighted_sup_weight_decays(grid):
    """With beta > 0 the weight at fixed x shrinks in time."""
    values = np.zeros((grid.n_t + 1, grid.n_x))
    j = grid.index_of(1.0)
    values[:, j] = 1.0
    w = WeightParams(lam=1.0, kappa=1.0)
    assert time_weighted_sup(Trajectory(grid, values), w) == pytest.approx(np.exp(-1.0))


def test_metric_axioms():
    reports = metric_axioms_report(300, seed=5)
    assert [r.inequality_id for r in reports] == ["identity", "symmetry", "triangle"]
    assert all(r.ok for r in reports)


def test_t_star_root():
    report = t_star_root_report(1000, seed=7)
    assert report.ok, report.worst_point
