"""Space-time white noise on the grid.

Cell increments are Normal(0, dt dx). They come from numpy's counter-based
Philox generator, keyed by the seed and positioned by the counter
(0, 0, time step, stream), so every (step, stream) block is reproducible
regardless of how ensembles are split across workers.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft

from .exceptions import DomainError, ShapeError
from .grid import GridSpec, Trajectory, integrate_cells
from .heat_kernel import apply_multiplier, forcing_multiplier, heat_multiplier

__all__ = [
    "NoiseRealization",
    "NoiseStream",
    "sample_noise",
    "stochastic_convolution",
    "brownian_motions",
    "convolution_variance",
]

logger = logging.getLogger(__name__)


def _key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)


def _generator(key: np.ndarray, step: int, stream: int) -> np.random.Generator:
    counter = np.array([0, 0, step, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


@dataclass
class NoiseStream:
    """Increments for a batched ensemble.

    Batch ``b`` reads stream ``stream_base + b``; row ``j`` of a batch is
    trajectory ``j`` of that batch, and row 0 equals
    ``sample_noise(grid, seed, stream_base + b)``.
    """

    grid: GridSpec
    seed: int = 0
    stream_base: int = 0

    def __post_init__(self):
        self._key = _key(self.seed)
        self._scale = np.sqrt(self.grid.dt * self.grid.dx)

    def increments(self, step: int, batch: int, size: int) -> np.ndarray:
        if not 0 <= step < self.grid.n_t:
            raise DomainError(f"step {step} outside 0..{self.grid.n_t - 1}")
        rng = _generator(self._key, step, self.stream_base + batch)
        return self._scale * rng.standard_normal((size, self.grid.n_x))


@dataclass
class NoiseRealization:
    """One white noise path: ``increments[k, i]`` is W over cell i of step k."""

    grid: GridSpec
    increments: np.ndarray
    seed: Optional[int] = None
    stream: Optional[int] = None

    def __post_init__(self):
        self.increments = np.asarray(self.increments, dtype=float)
        expected = (self.grid.n_t, self.grid.n_x)
        if self.increments.shape != expected:
            raise ShapeError(f"noise has shape {self.increments.shape}, grid needs {expected}")

    def sheet(self) -> np.ndarray:
        """Brownian sheet W(t_k, x_j) at the grid nodes, anchored at (0, 0).

        Cells left of the origin enter with a negative sign, following
        int_0^x = -int_x^0.
        """
        return integrate_cells(self.grid, self.increments)


def sample_noise(grid: GridSpec, seed: int = 0, stream: int = 0) -> NoiseRealization:
    noise = NoiseStream(grid, seed, stream)
    increments = np.vstack([noise.increments(k, 0, 1) for k in range(grid.n_t)])
    return NoiseRealization(grid, increments, seed, stream)


def stochastic_convolution(sigma_values, noise: NoiseRealization) -> Trajectory:
    """V_{k+1} = P_dt V_k + S(sigma_k dW_k / dx), V_0 = 0.

    ``sigma_values`` is a Trajectory or an array whose first n_t rows hold
    sigma(u) at the left end of each step. S is the forcing smoother of
    heat_kernel.forcing_multiplier.
    """
    grid = noise.grid
    if isinstance(sigma_values, Trajectory):
        if sigma_values.grid != grid:
            raise ShapeError("sigma and noise live on different grids")
        sigma_values = sigma_values.values
    sigma_values = np.asarray(sigma_values, dtype=float)
    if sigma_values.shape not in ((grid.n_t, grid.n_x), (grid.n_t + 1, grid.n_x)):
        raise ShapeError(f"sigma values have shape {sigma_values.shape}")
    heat = heat_multiplier(grid, grid.dt)
    smoother = forcing_multiplier(grid)
    values = np.zeros((grid.n_t + 1, grid.n_x))
    for k in range(grid.n_t):
        kick = sigma_values[k] * noise.increments[k] / grid.dx
        values[k + 1] = apply_multiplier(values[k], heat) + apply_multiplier(kick, smoother)
    return Trajectory(grid, values, {"seed": noise.seed, "stream": noise.stream})


def brownian_motions(noise: NoiseRealization, basis: np.ndarray, tol: float = 1e-8):
    """beta_i(t_k) = int_0^{t_k} int e_i(y) W(ds, dy) for an orthonormal family e_i.

    ``basis`` has shape (m, n_x) and must be orthonormal in L^2(dx); the
    result has shape (n_t + 1, m) and starts at 0.
    """
    grid = noise.grid
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    if basis.shape[1] != grid.n_x:
        raise ShapeError(f"basis has {basis.shape[1]} points, grid needs {grid.n_x}")
    gram = basis @ basis.T * grid.dx
    if not np.allclose(gram, np.eye(len(basis)), atol=tol, rtol=0):
        raise DomainError("basis is not orthonormal in L^2(dx)")
    increments = noise.increments @ basis.T
    return np.vstack([np.zeros(len(basis)), np.cumsum(increments, axis=0)])


def convolution_variance(grid: GridSpec, t: Optional[float] = None) -> float:
    """Var V(t, x) of the unit-sigma stochastic convolution on the periodic grid.

    The same at every x. Each Fourier mode contributes (1 - exp(-k^2 t)) / k^2
    (t for k = 0), so the value tends to sqrt(t / pi) as dx -> 0 and the
    window grows. ``t`` defaults to T and should be a multiple of dt.
    """
    t = grid.T if t is None else float(t)
    if t < 0:
        raise DomainError("variance needs t >= 0")
    k2 = (2.0 * np.pi * fft.fftfreq(grid.n_x, d=grid.dx)) ** 2
    modes = np.full_like(k2, t)
    nonzero = k2 > 0
    modes[nonzero] = -np.expm1(-k2[nonzero] * t) / k2[nonzero]
    return float(np.sum(modes) / (grid.n_x * grid.dx))
