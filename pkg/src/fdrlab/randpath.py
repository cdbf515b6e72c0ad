"""Reproducible random streams, Wiener paths and exact Ornstein-Uhlenbeck sampling.

Every random draw in the package comes from a Philox counter-based generator
keyed by ``(master_seed, path_index)``.  Independent uses of the same path
(Wiener increments, exact OU draws, restart schedules, initial data) live in
disjoint counter ranges selected by a stream tag, so the draws of one use never
shift when another use changes.  Paths can therefore be generated in any order
or on any number of threads and still come out bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "Stream",
    "TimeGrid",
    "SeedSpec",
    "WienerPath",
    "CircuitParams",
    "generator",
    "sample_normals",
    "sample_increments",
    "sample_wiener",
    "ou_exact_step",
    "ou_exact_coefficients",
    "discounted_integral",
    "simulate_current",
]

_MASK64 = (1 << 64) - 1


class Stream(IntEnum):
    """Counter-space tags; each tag owns 2**192 Philox blocks of a path key."""

    WIENER = 0
    OU_EXACT = 1
    SCHEDULE = 2
    INITIAL = 3


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = t_start + k * dt`` for ``k = 0 .. n_steps``."""

    dt: float
    n_steps: int
    t_start: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive and finite, got {self.dt!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be an integer >= 1, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def from_horizon(cls, dt: float, horizon: float, t_start: float = 0.0) -> "TimeGrid":
        """Grid covering ``[t_start, t_start + horizon]``; horizon must be a multiple of dt."""
        ratio = horizon / dt
        n = int(round(ratio))
        if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"horizon {horizon!r} is not a positive multiple of dt {dt!r}")
        return cls(dt=dt, n_steps=n, t_start=t_start)

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def t_end(self) -> float:
        return self.t_start + self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t_start + np.arange(self.n_nodes) * self.dt

    def time(self, k: int) -> float:
        return self.t_start + k * self.dt

    def index_of(self, t: float) -> int:
        """Node index of time ``t``; ``t`` must sit on the grid."""
        x = (t - self.t_start) / self.dt
        k = int(round(x))
        if abs(x - k) > 1e-6 or not 0 <= k <= self.n_steps:
            raise ValueError(f"time {t!r} is not a node of {self}")
        return k

    def index_at_or_after(self, t: float) -> int:
        """Smallest node index with ``t_k >= t`` (may exceed ``n_steps``)."""
        x = (t - self.t_start) / self.dt
        k = int(np.ceil(x - 1e-9))
        return max(k, 0)

    def coarsen(self, factor: int) -> "TimeGrid":
        if self.n_steps % factor:
            raise ValueError(f"n_steps={self.n_steps} is not divisible by {factor}")
        return TimeGrid(dt=self.dt * factor, n_steps=self.n_steps // factor, t_start=self.t_start)


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    path_index: int = 0

    def __post_init__(self):
        if self.path_index < 0:
            raise ValueError("path_index must be non-negative")
        if not 0 <= self.path_index <= _MASK64:
            raise ValueError("path_index must fit in 64 bits")

    @property
    def key(self) -> int:
        return (int(self.path_index) << 64) | (int(self.master_seed) & _MASK64)


def generator(seed: SeedSpec, stream: Stream = Stream.WIENER) -> np.random.Generator:
    """Numpy generator for one (seed, path, stream) triple."""
    bit_gen = np.random.Philox(key=seed.key, counter=[0, 0, 0, int(stream)])
    return np.random.Generator(bit_gen)


@dataclass(frozen=True, eq=False)
class WienerPath:
    """Brownian path on a grid: ``values[0] = 0`` and ``diff(values) = increments``.

    ``increments`` may carry leading batch axes, in which case every operation
    in the package treats the last axis as time.
    """

    grid: TimeGrid
    increments: np.ndarray
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape[-1] != self.grid.n_steps:
            raise ValueError(
                f"increments have {inc.shape[-1]} steps, grid has {self.grid.n_steps}"
            )
        inc = inc.copy()
        inc.flags.writeable = False
        vals = np.zeros(inc.shape[:-1] + (inc.shape[-1] + 1,))
        np.cumsum(inc, axis=-1, out=vals[..., 1:])
        vals.flags.writeable = False
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, grid: TimeGrid, values) -> "WienerPath":
        values = np.asarray(values, dtype=float)
        if np.any(values[..., 0] != 0):
            raise ValueError("a Wiener path must start at 0")
        return cls(grid, np.diff(values, axis=-1))

    @property
    def n_paths(self) -> int:
        return int(np.prod(self.increments.shape[:-1], dtype=int))

    def coarsen(self, factor: int) -> "WienerPath":
        """Same Brownian path observed on a grid ``factor`` times coarser."""
        grid = self.grid.coarsen(factor)
        inc = self.increments.reshape(self.increments.shape[:-1] + (grid.n_steps, factor))
        return WienerPath(grid, inc.sum(axis=-1))

    def __getitem__(self, item) -> "WienerPath":
        """Select paths from a batch (time axis is kept whole)."""
        if self.increments.ndim == 1:
            raise IndexError("single path cannot be indexed")
        return WienerPath(self.grid, self.increments[item])


@dataclass(frozen=True)
class CircuitParams:
    """Rigid wire loop: inductance ``L``, resistance ``R``, noise amplitude ``V``."""

    L: float
    R: float
    V: float
    kB_tau: float = 1.0

    def __post_init__(self):
        for name in ("L", "R", "kB_tau"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not (np.isfinite(self.V) and self.V >= 0):
            raise ValueError(f"V must be non-negative, got {self.V!r}")

    @property
    def rate(self) -> float:
        """Current relaxation rate R/L."""
        return self.R / self.L

    @property
    def stationary_energy(self) -> float:
        return self.V**2 / (4.0 * self.R)


def sample_normals(n: int, master_seed: int, path_indices, stream: Stream) -> np.ndarray:
    """Standard normals, one row of ``n`` per path index, from the given stream."""
    path_indices = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
    out = np.empty((path_indices.size, n))
    for row, p in enumerate(path_indices):
        generator(SeedSpec(master_seed, int(p)), stream).standard_normal(out=out[row])
    return out


def sample_increments(grid: TimeGrid, master_seed: int, path_indices) -> np.ndarray:
    """Wiener increments for several paths, shape ``(len(path_indices), n_steps)``.

    Row ``i`` is identical to ``sample_wiener(grid, SeedSpec(master_seed, path_indices[i]))``.
    """
    out = sample_normals(grid.n_steps, master_seed, path_indices, Stream.WIENER)
    out *= np.sqrt(grid.dt)
    return out


def sample_wiener(grid: TimeGrid, seed: SeedSpec) -> WienerPath:
    gen = generator(seed, Stream.WIENER)
    return WienerPath(grid, gen.standard_normal(grid.n_steps) * np.sqrt(grid.dt))


def ou_exact_coefficients(params: CircuitParams, dt: float) -> tuple[float, float]:
    """Decay ``a`` and noise scale ``b`` of the exact one-step current transition."""
    x = params.rate * dt
    a = np.exp(-x)
    b = params.V * np.sqrt(-np.expm1(-2.0 * x) / (2.0 * params.R * params.L))
    return float(a), float(b)


def ou_exact_step(I_k, params: CircuitParams, dt: float, normal_draw):
    """Exact transition ``I_{k+1} = a I_k + b Z`` of ``L dI = -R I dt + V dB``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    a, b = ou_exact_coefficients(params, dt)
    return a * I_k + b * normal_draw


def discounted_integral(increments, rate: float, dt: float) -> np.ndarray:
    """Left-point sums ``J_k = sum_{j<k} exp(rate (t_j - t_k)) dB_j`` with ``J_0 = 0``.

    Evaluated as weighted cumulative sums in windows short enough that the
    weights ``exp(rate * (t_j - t_start))`` stay far from overflow.
    """
    inc = np.asarray(increments, dtype=float)
    n = inc.shape[-1]
    out = np.zeros(inc.shape[:-1] + (n + 1,))
    if rate == 0:
        np.cumsum(inc, axis=-1, out=out[..., 1:])
        return out
    span = n if rate * dt * n <= 40.0 else max(1, int(40.0 / (rate * dt)))
    carry = np.zeros(inc.shape[:-1])
    for start in range(0, n, span):
        stop = min(start + span, n)
        m = stop - start
        grow = np.exp(rate * dt * np.arange(m))
        decay = np.exp(-rate * dt * np.arange(1, m + 1))
        partial = np.cumsum(inc[..., start:stop] * grow, axis=-1)
        out[..., start + 1 : stop + 1] = decay * (carry[..., None] + partial)
        carry = out[..., stop]
    return out


def simulate_current(
    params: CircuitParams,
    I_0,
    grid: TimeGrid,
    path: WienerPath | None = None,
    seed: SeedSpec | None = None,
    mode: str = "from_path",
) -> np.ndarray:
    """Current trajectory of ``L dI = -R I dt + V dB`` on ``grid``.

    ``mode="from_path"`` drives the exponential Euler recursion
    ``I_{k+1} = e^{-(R/L)dt} (I_k + (V/L) dB_k)`` with the increments of
    ``path``; it reproduces the left-point discretization of the explicit
    solution.  ``mode="exact"`` chains :func:`ou_exact_step` with fresh
    standard normals from the OU stream of ``seed``.
    """
    a = np.exp(-params.rate * grid.dt)
    if mode == "from_path":
        if path is None:
            raise ValueError("mode='from_path' needs a WienerPath")
        if path.grid != grid:
            raise ValueError("path grid does not match the requested grid")
        drive = path.increments * (a * params.V / params.L)
    elif mode == "exact":
        if seed is None:
            raise ValueError("mode='exact' needs a SeedSpec")
        _, b = ou_exact_coefficients(params, grid.dt)
        drive = generator(seed, Stream.OU_EXACT).standard_normal(grid.n_steps) * b
    else:
        raise ValueError(f"unknown mode {mode!r}")
    I_0 = np.asarray(I_0, dtype=float)
    lead = drive.shape[:-1]
    I_0 = np.broadcast_to(I_0, lead)
    out = np.empty(lead + (grid.n_nodes,))
    out[..., 0] = I_0
    zi = (a * I_0)[..., None]
    out[..., 1:], _ = lfilter([1.0], [1.0, -a], drive, axis=-1, zi=zi)
    return out
