"""Space-time grids and the fields that live on them.

The real line is truncated to the periodic window [-half_width, half_width)
with ``n_x`` equally spaced points; time runs over ``n_t`` steps of [0, T].
"""
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .exceptions import DomainError, ShapeError

__all__ = [
    "GridSpec",
    "Field",
    "Trajectory",
    "ControlField",
    "integrate_cells",
    "named_field",
    "named_control",
    "FIELD_PROFILES",
    "CONTROL_PROFILES",
]

DEFAULT_TAIL_TOLERANCE = 1e-10


@dataclass(frozen=True)
class GridSpec:
    T: float = 1.0
    n_t: int = 200
    half_width: float = 8.0
    n_x: int = 256
    periodic_extension: bool = True

    def __post_init__(self):
        if not self.T > 0 or self.n_t < 1:
            raise DomainError(f"need T > 0 and n_t >= 1, got T={self.T}, n_t={self.n_t}")
        if not self.half_width > 0 or self.n_x < 2:
            raise DomainError(
                f"need half_width > 0 and n_x >= 2, got {self.half_width}, {self.n_x}"
            )
        if self.n_x % 2:
            # x = 0 has to be a grid node for Int(h) and point events
            raise DomainError(f"n_x must be even, got {self.n_x}")

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_x

    @property
    def x(self) -> np.ndarray:
        return -self.half_width + self.dx * np.arange(self.n_x)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_t + 1)

    @property
    def origin_index(self) -> int:
        return self.n_x // 2

    def index_of(self, x: float) -> int:
        """Index of the grid node closest to x."""
        if abs(x) > self.half_width:
            raise DomainError(f"x={x} lies outside [-{self.half_width}, {self.half_width}]")
        return int(np.clip(np.rint((x + self.half_width) / self.dx), 0, self.n_x - 1))

    def kernel_tail_mass(self, t: Optional[float] = None) -> float:
        """Heat kernel mass started at 0 that leaves [-half_width, half_width] by time t."""
        t = self.T if t is None else t
        return float(2.0 * ndtr(-self.half_width / np.sqrt(t)))

    def validate(self, tail_tolerance: float = DEFAULT_TAIL_TOLERANCE) -> "GridSpec":
        mass = self.kernel_tail_mass()
        if mass > tail_tolerance:
            raise DomainError(
                f"kernel tail mass {mass:.3e} outside the window exceeds {tail_tolerance:.1e}; "
                "increase half_width"
            )
        return self

    def refined(self) -> "GridSpec":
        return replace(self, n_t=2 * self.n_t, n_x=2 * self.n_x)

    def as_dict(self) -> dict:
        return {
            "T": self.T,
            "n_t": self.n_t,
            "half_width": self.half_width,
            "n_x": self.n_x,
            "periodic_extension": self.periodic_extension,
        }

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse the command line form ``T,n_t,L,n_x``."""
        try:
            T, n_t, half_width, n_x = text.split(",")
            return cls(float(T), int(n_t), float(half_width), int(n_x))
        except ValueError as e:
            if isinstance(e, DomainError):
                raise
            raise DomainError(f"grid must read T,n_t,L,n_x, got '{text}'")


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{what} contains non-finite values")


@dataclass
class Field:
    """A spatial profile on the grid."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_x,):
            raise ShapeError(
                f"field has shape {self.values.shape}, grid needs ({self.grid.n_x},)"
            )
        _check_finite(self.values, "field")

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "Field":
        return cls(grid, fn(grid.x))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls(grid, np.zeros(grid.n_x))


@dataclass
class Trajectory:
    """A time-indexed family of profiles, time index 0..n_t inclusive."""

    grid: GridSpec
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.n_t + 1, self.grid.n_x)
        if self.values.shape != expected:
            raise ShapeError(f"trajectory has shape {self.values.shape}, grid needs {expected}")
        _check_finite(self.values, "trajectory")

    def at(self, k: int) -> Field:
        return Field(self.grid, self.values[k])

    @property
    def final(self) -> Field:
        return self.at(self.grid.n_t)


@dataclass
class ControlField:
    """A discretized element h of L^2([0,T] x R), constant on each time step.

    ``values[k]`` is the control on [t_k, t_{k+1}); ``norm_bound`` tags the
    control as a member of H_N.
    """

    grid: GridSpec
    values: np.ndarray
    norm_bound: Optional[float] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.n_t, self.grid.n_x)
        if self.values.shape != expected:
            raise ShapeError(f"control has shape {self.values.shape}, grid needs {expected}")
        _check_finite(self.values, "control")
        self.energy = 0.5 * float(np.sum(self.values**2)) * self.grid.dt * self.grid.dx
        if self.norm_bound is not None and self.energy > 0.5 * self.norm_bound**2 * (1 + 1e-12):
            raise DomainError(
                f"control energy {self.energy:.6g} exceeds N^2/2 for N={self.norm_bound}"
            )

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ControlField":
        return cls(grid, np.zeros((grid.n_t, grid.n_x)))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ControlField":
        """Sample fn(t, x) at the midpoint of every time step."""
        t_mid = grid.times[:-1] + 0.5 * grid.dt
        return cls(grid, fn(t_mid[:, None], grid.x[None, :]) * np.ones((grid.n_t, grid.n_x)))

    @property
    def norm(self) -> float:
        return float(np.sqrt(2.0 * self.energy))

    def __add__(self, other: "ControlField") -> "ControlField":
        if other.grid != self.grid:
            raise ShapeError("controls live on different grids")
        return ControlField(self.grid, self.values + other.values)

    def scaled(self, factor: float) -> "ControlField":
        return ControlField(self.grid, factor * self.values)


def integrate_cells(grid: GridSpec, cells: np.ndarray) -> np.ndarray:
    """Sum cell masses over [0, t_k] x [0, x_j] at every grid node.

    ``cells[k, i]`` is the mass of [t_k, t_{k+1}) x [x_i, x_i + dx). Cells
    left of the origin enter with a negative sign, following
    int_0^x = -int_x^0. The result has shape (n_t + 1, n_x).
    """
    cells = np.asarray(cells, dtype=float)
    if cells.shape != (grid.n_t, grid.n_x):
        raise ShapeError(f"cells have shape {cells.shape}, grid needs {(grid.n_t, grid.n_x)}")
    in_time = np.vstack([np.zeros(grid.n_x), np.cumsum(cells, axis=0)])
    origin = grid.origin_index
    right = np.cumsum(in_time[:, origin:-1], axis=1)
    left = -np.cumsum(in_time[:, :origin][:, ::-1], axis=1)[:, ::-1]
    return np.hstack([left, np.zeros((grid.n_t + 1, 1)), right])


FIELD_PROFILES = {
    "zero": lambda x: np.zeros_like(x),
    "one": lambda x: np.ones_like(x),
    "bump": lambda x: np.exp(-(x**2)),
}

CONTROL_PROFILES = {
    "zero": lambda t, x: 0.0 * t * x,
    "unit": lambda t, x: np.ones_like(t * x),
    "bump": lambda t, x: np.exp(-(x**2)) + 0.0 * t,
    "pulse": lambda t, x: (t < 0.5) * np.exp(-(x**2)),
}


def named_field(name: str, grid: GridSpec) -> Field:
    try:
        return Field.from_function(grid, FIELD_PROFILES[name])
    except KeyError:
        raise DomainError(f"unknown initial datum '{name}', choose from {sorted(FIELD_PROFILES)}")


def named_control(name: str, grid: GridSpec) -> ControlField:
    try:
        return ControlField.from_function(grid, CONTROL_PROFILES[name])
    except KeyError:
        raise DomainError(f"unknown control '{name}', choose from {sorted(CONTROL_PROFILES)}")
