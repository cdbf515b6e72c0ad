"""Circuit energy: the physical Ito solution and spurious Stratonovich solutions.

The Stratonovich energy equation has zero as an equilibrium, so a solution may
stop at any zero of the energy, rest there for a while and restart from zero
driven by the same Brownian path.  :func:`build_overline` and
:func:`build_underline` perform that surgery on a grid.  Stopping times are
realized on grid nodes: a sign change of the current inside ``(t_k, t_{k+1}]``
sets the stopping time to ``t_{k+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .randpath import (
    CircuitParams,
    SeedSpec,
    Stream,
    TimeGrid,
    WienerPath,
    discounted_integral,
    generator,
)
from .stochint import energy_sde, heun_step

__all__ = [
    "EnergyPath",
    "RestartSchedule",
    "Duration",
    "ScheduleSpec",
    "StoppingLog",
    "ZeroHit",
    "IncompleteConstruction",
    "ito_energy_explicit",
    "mean_energy",
    "fdr_voltage",
    "detect_zero_hit",
    "build_overline",
    "build_underline",
    "build_from_integral",
    "power_from_energy",
    "current_from_energy",
    "stratonovich_residuals",
]

_SEARCH_CHUNK = 1024


@dataclass(frozen=True, eq=False)
class EnergyPath:
    """Energy on a grid.  ``current`` is the signed current behind it, when known."""

    grid: TimeGrid
    values: np.ndarray
    current: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("energy must be non-negative")
        if self.values.shape[-1] != self.grid.n_nodes:
            raise ValueError("energy values do not match the grid")

    def at(self, t: float):
        return self.values[..., self.grid.index_of(t)]


@dataclass(frozen=True)
class RestartSchedule:
    """Waiting times ``lambdas`` (lambda_0..lambda_N) and rest times ``mus``.

    ``family="overline"`` takes ``N + 1`` rest times (mu_1..mu_{N+1}); the
    underline family takes ``N`` (mu_1..mu_N).
    """

    lambdas: tuple
    mus: tuple
    family: str = "overline"

    def __post_init__(self):
        lambdas = tuple(float(x) for x in self.lambdas)
        mus = tuple(float(x) for x in self.mus)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "mus", mus)
        if self.family not in ("overline", "underline"):
            raise ValueError(f"unknown family {self.family!r}")
        if not lambdas:
            raise ValueError("at least lambda_0 is required")
        n = len(lambdas) - 1
        expected = n + 1 if self.family == "overline" else n
        if len(mus) != expected:
            raise ValueError(
                f"{self.family} family with N={n} needs {expected} rest times, got {len(mus)}"
            )
        if self.family == "overline" and n < 1:
            raise ValueError("the overline family needs N >= 1")
        if not all(np.isfinite(x) and x > 0 for x in lambdas):
            raise ValueError("waiting times lambda_n must be positive and finite")
        if not all(np.isfinite(x) and x >= 0 for x in mus):
            raise ValueError("rest times mu_n must be non-negative and finite")

    @property
    def N(self) -> int:
        return len(self.lambdas) - 1

    @classmethod
    def constant(cls, N: int, lam: float, mu: float, family: str = "overline"):
        n_mu = N + 1 if family == "overline" else N
        return cls((lam,) * (N + 1), (mu,) * n_mu, family)


@dataclass(frozen=True)
class Duration:
    """Constant duration, or exponential with the given rate when ``rate`` is set."""

    value: float | None = None
    rate: float | None = None

    def __post_init__(self):
        if (self.value is None) == (self.rate is None):
            raise ValueError("give exactly one of value or rate")
        if self.rate is not None and not self.rate > 0:
            raise ValueError("exponential rate must be positive")
        if self.value is not None and not (np.isfinite(self.value) and self.value >= 0):
            raise ValueError("duration must be non-negative and finite")

    @classmethod
    def parse(cls, text) -> "Duration":
        """``"0.5"`` or ``"exp:2.0"`` (exponential with rate 2)."""
        text = str(text).strip()
        if text.startswith("exp:"):
            return cls(rate=float(text[4:]))
        return cls(value=float(text))

    def draw(self, gen: np.random.Generator) -> float:
        if self.rate is not None:
            return float(gen.exponential(1.0 / self.rate))
        return float(self.value)

    def __str__(self):
        return f"exp:{self.rate!r}" if self.rate is not None else repr(self.value)


@dataclass(frozen=True)
class ScheduleSpec:
    """Distributional description of a restart schedule, realized per path."""

    N: int
    lam: Duration
    mu: Duration
    family: str = "overline"

    def realize(self, seed: SeedSpec) -> RestartSchedule:
        if self.lam.rate is None and self.mu.rate is None:
            return RestartSchedule.constant(self.N, self.lam.value, self.mu.value, self.family)
        gen = generator(seed, Stream.SCHEDULE)
        n_mu = self.N + 1 if self.family == "overline" else self.N
        # lambda_n and mu_n are drawn in epoch order, interleaved, so epoch n only
        # ever sees draws of epochs <= n.
        lambdas, mus = [], []
        for n in range(self.N + 2):
            if n <= self.N:
                lam = self.lam.draw(gen)
                while lam <= 0.0:
                    lam = self.lam.draw(gen)
                lambdas.append(lam)
            if 1 <= n <= n_mu:
                mus.append(self.mu.draw(gen))
        return RestartSchedule(tuple(lambdas), tuple(mus), self.family)


@dataclass
class StoppingLog:
    """Realized stopping times and the intervals on which the energy is pinned at 0."""

    T: list = field(default_factory=list)
    crossing_times: list = field(default_factory=list)
    zero_intervals: list = field(default_factory=list)
    restart_nodes: list = field(default_factory=list)


@dataclass(frozen=True)
class ZeroHit:
    """Zero crossing of a current trajectory.

    ``index`` is the left node of the crossing step, ``time`` the linear
    interpolation of the crossing and ``node`` the grid node used for surgery.
    """

    index: int
    time: float
    node: int


class IncompleteConstruction(RuntimeError):
    """The grid ended before the schedule was fully realized.

    The partial energy is still the exact restriction of the solution to the
    grid; it is attached together with the partial stopping log.
    """

    def __init__(self, message, energy: EnergyPath, log: StoppingLog):
        super().__init__(message)
        self.energy = energy
        self.log = log


def fdr_voltage(kB_tau: float, R: float) -> float:
    """Noise amplitude ``sqrt(2 kB_tau R)`` fixed by equipartition."""
    if not (kB_tau > 0 and R > 0):
        raise ValueError("kB_tau and R must be positive")
    return float(np.sqrt(2.0 * kB_tau * R))


def mean_energy(params: CircuitParams, mean_E0: float, t) -> np.ndarray | float:
    """Closed-form solution of ``dm/dt = V^2/2L - 2(R/L) m``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    e_inf = params.stationary_energy
    out = e_inf + (mean_E0 - e_inf) * np.exp(-2.0 * params.rate * t)
    return float(out) if out.ndim == 0 else out


def _initial_current(params: CircuitParams, E_0):
    E_0 = np.asarray(E_0, dtype=float)
    if np.any(E_0 < 0):
        raise ValueError("E_0 must be non-negative")
    return np.sqrt(2.0 * E_0 / params.L)


def current_from_energy(params: CircuitParams, E_0, path: WienerPath) -> np.ndarray:
    """``I_t = e^{-(R/L)t} sqrt(2E_0/L) + (V/L) int_0^t e^{(R/L)(s-t)} dB_s`` (left-point)."""
    grid = path.grid
    J = discounted_integral(path.increments, params.rate, grid.dt)
    I_0 = _initial_current(params, E_0)
    decay = np.exp(-params.rate * grid.dt * np.arange(grid.n_nodes))
    return np.asarray(I_0)[..., None] * decay + (params.V / params.L) * J


def ito_energy_explicit(params: CircuitParams, E_0, path: WienerPath) -> EnergyPath:
    current = current_from_energy(params, E_0, path)
    return EnergyPath(path.grid, 0.5 * params.L * current**2, current)


def power_from_energy(params: CircuitParams, E):
    """Dissipated power ``R I^2 = (2R/L) E``."""
    values = getattr(E, "values", E)
    return (2.0 * params.R / params.L) * np.asarray(values)


def detect_zero_hit(trajectory, from_index: int = 0, dt: float = 1.0, t_start: float = 0.0):
    """First zero of a current trajectory at or after ``from_index``.

    A step ``k -> k+1`` is a hit when ``I_k = 0`` (snapped to node ``k``) or
    when the signs of ``I_k`` and ``I_{k+1}`` differ (snapped to ``k + 1``).
    Returns ``None`` when the trajectory ends first.
    """
    x = np.asarray(trajectory, dtype=float)
    return _first_hit(x[from_index:], from_index, dt, t_start)


def _first_hit(x, offset, dt, t_start):
    if x.size == 0:
        return None
    s = np.sign(x)
    hits = (s[:-1] != s[1:]) | (x[:-1] == 0)
    if not hits.any():
        if x[-1] == 0:
            k = offset + x.size - 1
            return ZeroHit(k, t_start + k * dt, k)
        return None
    k = int(np.argmax(hits))
    if x[k] == 0:
        return ZeroHit(offset + k, t_start + (offset + k) * dt, offset + k)
    frac = x[k] / (x[k] - x[k + 1])
    return ZeroHit(offset + k, t_start + (offset + k + frac) * dt, offset + k + 1)


class _Segment:
    """Lazily evaluated current on one branch of a spurious solution.

    Branch 0 is the physical current; a branch restarted at node ``r`` is
    ``(V/L)(J_k - a^{k-r} J_r)``, the discounted integral started afresh at
    ``t_r`` with the same increments.
    """

    def __init__(self, physical, J, scale, decay, restart=None):
        self.physical = physical
        self.J = J
        self.scale = scale
        self.decay = decay
        self.restart = restart

    def __call__(self, lo, hi):
        if self.restart is None:
            return self.physical[lo:hi]
        r = self.restart
        return self.scale * (self.J[lo:hi] - self.decay[lo - r : hi - r] * self.J[r])

    def find_hit(self, from_index, n_nodes, dt, t_start):
        lo = from_index
        while lo < n_nodes - 1:
            hi = min(lo + _SEARCH_CHUNK + 1, n_nodes)
            hit = _first_hit(self(lo, hi), lo, dt, t_start)
            if hit is not None:
                return hit
            lo = hi - 1
        return None


def _build_spurious(params, E_0, path, schedule, family):
    if path.increments.ndim != 1:
        raise ValueError("spurious solutions are built one path at a time")
    J = discounted_integral(path.increments, params.rate, path.grid.dt)
    return build_from_integral(params, E_0, path.grid, J, schedule, family)


def build_from_integral(params, E_0, grid: TimeGrid, J, schedule, family):
    """Spurious solution from a precomputed discounted integral ``J`` of one path."""
    if schedule.family != family:
        raise ValueError(f"schedule is for the {schedule.family} family, not {family}")
    n_nodes = grid.n_nodes
    dt = grid.dt
    scale = params.V / params.L
    decay = np.exp(-params.rate * dt * np.arange(n_nodes))
    I_0 = float(_initial_current(params, E_0))
    physical = I_0 * decay + scale * J

    current = np.zeros(n_nodes)
    log = StoppingLog()
    segment = _Segment(physical, J, scale, decay)
    start = 0
    threshold = schedule.lambdas[0]
    N = schedule.N

    def incomplete(message):
        current[start:] = segment(start, n_nodes)
        energy = EnergyPath(grid, 0.5 * params.L * current**2, current)
        return IncompleteConstruction(message, energy, log)

    for n in range(1, N + 2):
        from_index = grid.index_at_or_after(threshold)
        hit = None
        if from_index < n_nodes:
            hit = segment.find_hit(from_index, n_nodes, dt, grid.t_start)
        if hit is None:
            raise incomplete(f"T_{n} lies beyond the grid end t={grid.t_end}")
        m = hit.node
        current[start:m] = segment(start, m)
        log.T.append(grid.time(m))
        log.crossing_times.append(float(hit.time))
        if family == "underline" and n == N + 1:
            log.zero_intervals.append((grid.time(m), np.inf))
            start = n_nodes
            break
        mu = schedule.mus[n - 1]
        r = grid.index_at_or_after(grid.time(m) + mu)
        if r > grid.n_steps:
            # pinned at zero up to the grid end
            log.zero_intervals.append((grid.time(m), grid.time(m) + mu))
            energy = EnergyPath(grid, 0.5 * params.L * current**2, current)
            raise IncompleteConstruction(
                f"T_{n} + mu_{n} lies beyond the grid end t={grid.t_end}", energy, log
            )
        log.zero_intervals.append((grid.time(m), grid.time(r)))
        log.restart_nodes.append(r)
        segment = _Segment(physical, J, scale, decay, restart=r)
        start = r
        if n <= N:
            threshold = grid.time(r) + schedule.lambdas[n]
    current[start:] = segment(start, n_nodes)
    energy = EnergyPath(grid, 0.5 * params.L * current**2, current)
    return energy, log


def build_overline(params, E_0, path: WienerPath, schedule: RestartSchedule):
    """Spurious solution that keeps a final excursion running after ``T_{N+1} + mu_{N+1}``.

    Raises :class:`IncompleteConstruction` when the grid ends before the final
    excursion starts.
    """
    return _build_spurious(params, E_0, path, schedule, "overline")


def build_underline(params, E_0, path: WienerPath, schedule: RestartSchedule):
    """Spurious solution that stays at zero forever after ``T_{N+1}``."""
    return _build_spurious(params, E_0, path, schedule, "underline")


def stratonovich_residuals(params: CircuitParams, energy: EnergyPath, path: WienerPath):
    """One-step Heun defects of an energy path against the Stratonovich equation.

    Between zeros the explicit energy solves the equation driven by
    ``sign(I) dB``, so each step uses the sign of the current (the sign of
    ``I_{k+1}`` on the first step of an excursion).  Returns
    ``(residuals, steps, pinned)``: ``steps`` marks steps inside an excursion,
    ``pinned`` marks steps with ``E_k = E_{k+1} = 0``.
    """
    if energy.current is None:
        raise ValueError("energy path carries no signed current")
    I = energy.current
    E = energy.values
    s = np.sign(I[:-1])
    start = (s == 0) & (I[1:] != 0)
    s = np.where(start, np.sign(I[1:]), s)
    steps = ((np.sign(I[1:]) == np.sign(I[:-1])) & (I[:-1] != 0)) | start
    pinned = (E[:-1] == 0) & (E[1:] == 0)
    spec = energy_sde(params, "stratonovich")
    predicted = heun_step(spec, E[:-1], 0.0, path.grid.dt, s * path.increments)
    return predicted - E[1:], steps, pinned
