"""Reproducible Wiener paths and the non-Markovian ``tanh`` drive.

Streams are keyed by ``(master_seed, stream_index)`` through the Philox
counter-based generator, so trajectory ``i`` sees the same noise no matter
which worker computes it or in which order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigurationError

DEFAULT_DT = 1e-3
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i * dt`` for ``i = 0..n_steps``."""

    dt: float = DEFAULT_DT
    n_steps: int = 1
    t0: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError(f"dt must be positive and finite, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ConfigurationError(f"n_steps must be a non-negative integer, got {self.n_steps}")
        if self.t0 != 0.0:
            raise ConfigurationError("grids always start at t0 = 0")

    @classmethod
    def from_t_max(cls, t_max: float, dt: float = DEFAULT_DT) -> "TimeGrid":
        if dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {dt}")
        n = int(round(t_max / dt))
        if abs(n * dt - t_max) > 1e-9 * max(1.0, abs(t_max)):
            raise ConfigurationError(f"t_max={t_max} is not a multiple of dt={dt}")
        return cls(dt=dt, n_steps=n)

    @property
    def t_max(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises if ``t`` is not on the grid."""
        i = int(round(t / self.dt))
        if i < 0 or i > self.n_steps or abs(i * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigurationError(f"time {t} is not on the grid (dt={self.dt}, t_max={self.t_max})")
        return i

    def indices_of(self, times) -> np.ndarray:
        return np.array([self.index_of(t) for t in times], dtype=np.int64)

    def halved(self) -> "TimeGrid":
        return TimeGrid(dt=self.dt / 2, n_steps=2 * self.n_steps)


@dataclass(frozen=True)
class RngSeed:
    master_seed: int = 0
    stream_index: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_index"):
            v = getattr(self, name)
            if int(v) != v or not 0 <= v <= _MASK64:
                raise ConfigurationError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def generator(self) -> np.random.Generator:
        key = np.array([self.master_seed, self.stream_index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def stream(self, index: int) -> "RngSeed":
        return RngSeed(self.master_seed, index)


@dataclass(frozen=True, eq=False)
class WienerPath:
    grid: TimeGrid
    increments: np.ndarray
    cumulative: np.ndarray
    seed: RngSeed | None = field(default=None)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def w_tilde(self, gamma: float) -> np.ndarray:
        """``2 sqrt(gamma) W_t`` on the grid."""
        return 2.0 * math.sqrt(gamma) * self.cumulative

    def tanh_tilde(self, gamma: float) -> np.ndarray:
        out = np.empty(self.cumulative.size)
        _kernels.tanh_tilde_array(self.cumulative, 2.0 * math.sqrt(gamma), out)
        return out

    def negated(self) -> "WienerPath":
        # 0.0 - x rather than -x keeps W_0 = +0.0
        return WienerPath(self.grid, 0.0 - self.increments, 0.0 - self.cumulative, self.seed)

    def coarsened(self) -> "WienerPath":
        """The same Brownian path on a grid with twice the step.

        Increments are summed pairwise, so a path generated at ``dt/2`` and
        its coarsening at ``dt`` share every ``W_{t}`` on the coarse grid.
        """
        if self.grid.n_steps % 2:
            raise ConfigurationError("coarsening needs an even number of steps")
        inc = self.increments[0::2] + self.increments[1::2]
        return from_increments(inc, self.grid.dt * 2, seed=self.seed)


def from_increments(increments, dt: float, seed: RngSeed | None = None) -> WienerPath:
    """Wrap given increments (e.g. a hand-built test path) as a WienerPath."""
    inc = np.ascontiguousarray(increments, dtype=np.float64)
    grid = TimeGrid(dt=dt, n_steps=inc.size)
    cum = np.empty(inc.size + 1)
    cum[0] = 0.0
    # sequential summation, matching the compiled generator
    np.cumsum(inc, out=cum[1:])
    return WienerPath(grid, inc, cum, seed)


def generate_wiener_path(grid: TimeGrid, seed: RngSeed) -> WienerPath:
    """Draw ``grid.n_steps`` i.i.d. N(0, dt) increments from ``seed``'s stream."""
    if not isinstance(grid, TimeGrid):
        raise ConfigurationError("grid must be a TimeGrid")
    inc = np.empty(grid.n_steps)
    cum = np.empty(grid.n_steps + 1)
    _kernels.fill_path(seed.generator(), math.sqrt(grid.dt), inc, cum)
    return WienerPath(grid, inc, cum, seed)


def tanh_tilde(path: WienerPath, gamma: float, i: int) -> float:
    """``tanh(2 sqrt(gamma) W_{t_i})``; saturates to +-1 for large arguments."""
    if not 0 <= i <= path.grid.n_steps:
        raise IndexError(i)
    return math.tanh(2.0 * math.sqrt(gamma) * path.cumulative[i])


def tanh_increment(path: WienerPath, gamma: float, i: int) -> float:
    """Pathwise increment ``tanh_tilde(i + 1) - tanh_tilde(i)``."""
    if not 0 <= i < path.grid.n_steps:
        raise IndexError(i)
    return tanh_tilde(path, gamma, i + 1) - tanh_tilde(path, gamma, i)


def convergence_pair(grid: TimeGrid, seed: RngSeed) -> tuple[WienerPath, WienerPath]:
    """(path at ``dt``, same Brownian path at ``dt/2``) for step-halving checks."""
    fine = generate_wiener_path(grid.halved(), seed)
    return fine.coarsened(), fine
