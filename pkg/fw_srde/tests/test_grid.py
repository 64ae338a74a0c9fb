import numpy as np
import pytest

from fw_srde.exceptions import DomainError, ShapeError
from fw_srde.grid import (
    ControlField,
    Field,
    GridSpec,
    Trajectory,
    integrate_cells,
    named_control,
    named_field,
)

from . import factories


def test_default_grid():
    grid = GridSpec()
    assert grid.dt == pytest.approx(0.005)
    assert grid.dx == pytest.approx(0.0625)
    assert grid.x[grid.origin_index] == 0.0
    assert grid.times[-1] == pytest.approx(1.0)
    assert len(grid.x) == 256


@pytest.mark.parametrize(
    "kwargs",
    [{"T": 0.0}, {"n_t": 0}, {"half_width": -1.0}, {"n_x": 127}],
    ids=["T", "n_t", "half_width", "odd n_x"],
)
def test_grid_rejects(kwargs):
    with pytest.raises(DomainError):
        GridSpec(**kwargs)


def test_parse():
    assert GridSpec.parse("1,200,8,256") == GridSpec()
    assert GridSpec.parse("0.5,10,4,32") == GridSpec(0.5, 10, 4.0, 32)


@pytest.mark.parametrize("text", ["1,200,8", "a,b,c,d", "1,200,8,255"])
def test_parse_invalid(text):
    with pytest.raises(DomainError):
        GridSpec.parse(text)


def test_index_of(grid):
    assert grid.index_of(0.0) == grid.origin_index
    assert grid.x[grid.index_of(1.01)] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        grid.index_of(100.0)


def test_refined(grid):
    refined = grid.refined()
    assert refined.dt == pytest.approx(grid.dt / 2)
    assert refined.dx == pytest.approx(grid.dx / 2)


def test_validate():
    assert GridSpec().validate() == GridSpec()
    with pytest.raises(DomainError):
        GridSpec(half_width=1.0, n_x=16).validate()


def test_field_shape(grid):
    with pytest.raises(ShapeError):
        Field(grid, np.zeros(grid.n_x + 2))


def test_trajectory_rejects_non_finite(grid):
    values = np.zeros((grid.n_t + 1, grid.n_x))
    values[3, 4] = np.nan
    with pytest.raises(DomainError):
        Trajectory(grid, values)


def test_trajectory_final(grid):
    values = np.arange(grid.n_t + 1)[:, None] * np.ones(grid.n_x)
    trajectory = Trajectory(grid, values)
    assert np.all(trajectory.final.values == grid.n_t)


def test_energy_zero(grid):
    assert ControlField.zeros(grid).energy == 0.0


def test_energy_unit_control(grid):
    # 1/2 * T * 2 Lambda
    h = ControlField(grid, np.ones((grid.n_t, grid.n_x)))
    assert h.energy == pytest.approx(grid.T * grid.half_width)


@pytest.mark.parametrize("factor", [0.5, 2.0, -3.0])
def test_energy_scaling(grid, factor):
    h = factories.ControlFieldFactory(grid=grid)
    assert h.scaled(factor).energy == pytest.approx(factor**2 * h.energy)


def test_energy_positive_definite(grid):
    values = np.zeros((grid.n_t, grid.n_x))
    values[7, 11] = 1e-3
    assert ControlField(grid, values).energy > 0


def test_norm_bound(grid):
    h = factories.ControlFieldFactory(grid=grid)
    ControlField(grid, h.values, norm_bound=h.norm * 1.01)
    with pytest.raises(DomainError):
        ControlField(grid, h.values, norm_bound=h.norm * 0.99)


def test_control_sum(grid):
    h = factories.ControlFieldFactory(grid=grid)
    assert (h + h).energy == pytest.approx(4 * h.energy)
    other = factories.ControlFieldFactory(grid=GridSpec(n_t=10, n_x=16))
    with pytest.raises(ShapeError):
        h + other


def test_integrate_cells_unit_mass(grid):
    sheet = integrate_cells(grid, np.ones((grid.n_t, grid.n_x)))
    k = np.arange(grid.n_t + 1)[:, None]
    j = np.arange(grid.n_x)[None, :] - grid.origin_index
    np.testing.assert_allclose(sheet, k * j)


def test_integrate_cells_shape(grid):
    with pytest.raises(ShapeError):
        integrate_cells(grid, np.ones((grid.n_t + 1, grid.n_x)))


def test_named_profiles(grid):
    assert named_field("bump", grid).values[grid.origin_index] == 1.0
    assert named_control("unit", grid).energy == pytest.approx(grid.T * grid.half_width)
    with pytest.raises(DomainError):
        named_field("nope", grid)
    with pytest.raises(DomainError):
        named_control("nope", grid)
