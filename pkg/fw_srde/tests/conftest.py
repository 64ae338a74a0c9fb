import pytest
from click.testing import CliRunner

from fw_srde.coefficients import builtin

from . import factories


@pytest.fixture
def grid():
    """A desk grid: 50 steps on [0, 1] and 128 points on [-8, 8)."""
    return factories.GridSpecFactory()


@pytest.fixture
def fine_grid():
    """Resolves sin(16 x) and the heat kernel at t = dt."""
    return factories.GridSpecFactory(half_width=4.0, n_x=256)


@pytest.fixture(scope="session")
def linear():
    """b = 0, sigma = 1: the Gaussian benchmark."""
    return builtin("zero_drift_unit_sigma")


@pytest.fixture(scope="session")
def ulogu():
    return builtin("ulogu_bounded_sigma")


@pytest.fixture(scope="session")
def tanh():
    return builtin("lipschitz_tanh")


@pytest.fixture
def zero_field(grid):
    return factories.FieldFactory(grid=grid, values=0.0 * grid.x)


@pytest.fixture
def runner():
    return CliRunner()
