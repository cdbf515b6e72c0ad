"""Ensemble orchestration and statistics.

Paths are split into blocks whose boundaries depend only on the number of
paths and the grid size.  Each block produces per-observable summaries that are
merged in block order, so a run is bit-identical for every thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bsde, circuit, stochint
from .randpath import (
    CircuitParams,
    SeedSpec,
    Stream,
    TimeGrid,
    WienerPath,
    discounted_integral,
    ou_exact_coefficients,
    sample_increments,
    sample_normals,
)

__all__ = [
    "EnsembleStats",
    "ConvergenceCheck",
    "BoundCheck",
    "EnsembleResult",
    "ZeroFraction",
    "FailedPathBudget",
    "PhysicalCircuit",
    "SpuriousCircuit",
    "BsdeExperiment",
    "AlphaExperiment",
    "EXPERIMENTS",
    "observable_key",
    "run_ensemble",
    "check_convergence",
    "check_upper_bound",
    "check_equipartition",
    "almost_sure_zero_fraction",
    "FAILED_PATH_BUDGET",
]

FAILED_PATH_BUDGET = 1e-3
_BLOCK_ELEMENTS = 2_000_000


@dataclass
class EnsembleStats:
    """Streaming count, mean, centred second moment and range."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    min: float = math.inf
    max: float = -math.inf

    @classmethod
    def from_values(cls, values) -> "EnsembleStats":
        x = np.asarray(values, dtype=float).ravel()
        if x.size == 0:
            return cls()
        mean = float(np.mean(x))
        return cls(
            n=int(x.size),
            mean=mean,
            m2=float(np.sum((x - mean) ** 2)),
            min=float(np.min(x)),
            max=float(np.max(x)),
        )

    def update(self, x: float) -> None:
        """Welford single-sample update."""
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)
        self.min = min(self.min, x)
        self.max = max(self.max, x)

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        """Combine two disjoint samples (Chan et al. pairwise update)."""
        if other.n == 0:
            return EnsembleStats(self.n, self.mean, self.m2, self.min, self.max)
        if self.n == 0:
            return EnsembleStats(other.n, other.mean, other.m2, other.min, other.max)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.n * other.n / n)
        return EnsembleStats(n, mean, m2, min(self.min, other.min), max(self.max, other.max))

    __add__ = merge

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n >= 2 else math.nan

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n >= 2 else math.nan

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "variance": self.variance,
            "se": self.standard_error,
            "min": self.min,
            "max": self.max,
        }


@dataclass
class ConvergenceCheck:
    """Pass iff ``|mean - target| <= tolerance_se_multiples * standard_error``."""

    target: float
    observed: EnsembleStats
    tolerance_se_multiples: float = 3.0
    label: str = ""
    details: dict = field(default_factory=dict)

    @property
    def standard_error(self) -> float:
        return self.observed.standard_error

    @property
    def deviation_se(self) -> float:
        se = self.standard_error
        diff = abs(self.observed.mean - self.target)
        if se == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / se

    @property
    def passed(self) -> bool:
        return abs(self.observed.mean - self.target) <= self.tolerance_se_multiples * self.standard_error

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def describe(self) -> str:
        return (
            f"{self.label or 'check'}: mean={self.observed.mean:.6g} target={self.target:.6g} "
            f"SE={self.standard_error:.3g} ({self.deviation_se:.2f} SE, "
            f"limit {self.tolerance_se_multiples:g}) -> {self.verdict}"
        )

    def to_dict(self) -> dict:
        return {
            "kind": "target",
            "label": self.label,
            "target": self.target,
            "mean": self.observed.mean,
            "se": self.standard_error,
            "tolerance_se_multiples": self.tolerance_se_multiples,
            "verdict": self.verdict,
            **self.details,
        }


@dataclass
class BoundCheck:
    """Pass iff ``mean <= bound``."""

    bound: float
    observed: EnsembleStats
    label: str = ""

    @property
    def passed(self) -> bool:
        return self.observed.mean <= self.bound

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def describe(self) -> str:
        return f"{self.label or 'bound'}: mean={self.observed.mean:.6g} <= {self.bound:g} -> {self.verdict}"

    def to_dict(self) -> dict:
        return {
            "kind": "upper_bound",
            "label": self.label,
            "bound": self.bound,
            "mean": self.observed.mean,
            "verdict": self.verdict,
        }


def check_convergence(stats: EnsembleStats, target: float, k: float = 3.0, label: str = ""):
    return ConvergenceCheck(target=float(target), observed=stats, tolerance_se_multiples=k, label=label)


def check_upper_bound(stats: EnsembleStats, bound: float, label: str = "") -> BoundCheck:
    return BoundCheck(bound=float(bound), observed=stats, label=label)


def check_equipartition(
    stats: EnsembleStats, params: CircuitParams, t: float | None = None, k: float = 3.0
) -> ConvergenceCheck:
    """Compare an energy ensemble with ``V^2/4R`` and report whether that equals ``kB_tau/2``."""
    if stats.n < 100:
        raise ValueError(f"equipartition check needs at least 100 paths, got {stats.n}")
    if t is not None and t < 5.0 * params.L / (2.0 * params.R):
        raise ValueError(f"t={t} is shorter than five energy relaxation times")
    target = params.stationary_energy
    check = check_convergence(stats, target, k, label="equipartition")
    check.details["half_kB_tau"] = 0.5 * params.kB_tau
    check.details["equipartition_exact"] = bool(abs(target - 0.5 * params.kB_tau) <= 1e-12)
    return check


# ---------------------------------------------------------------------------
# experiments


def observable_key(name: str, t: float) -> str:
    return f"{name}@{t:g}"


@dataclass
class BlockOutput:
    series: dict
    failed: np.ndarray


def _initial_energy(E0, params: CircuitParams, master_seed, path_indices) -> np.ndarray:
    n = len(path_indices)
    if isinstance(E0, str):
        if E0 != "equilibrium":
            raise ValueError(f"unknown initial energy {E0!r}")
        # I_0 ~ N(0, kB_tau / L): finite fourth moment
        z = sample_normals(1, master_seed, path_indices, Stream.INITIAL)[:, 0]
        I0 = z * np.sqrt(params.kB_tau / params.L)
        return 0.5 * params.L * I0**2
    return np.full(n, float(E0))


@dataclass(frozen=True)
class PhysicalCircuit:
    """Physical energy of the noisy circuit.

    ``scheme``: ``explicit`` (closed-form solution on the Wiener path),
    ``exact`` (exact OU transitions from an independent stream),
    ``euler_maruyama`` (Ito energy equation) or ``heun`` (Stratonovich energy
    equation, whose trivial solution stays at 0 when started at 0).
    """

    params: CircuitParams
    grid: TimeGrid
    E0: float | str = 0.0
    scheme: str = "explicit"
    kind = "physical"
    observables = ("energy", "power", "current")

    def __post_init__(self):
        if self.scheme not in ("explicit", "exact", "euler_maruyama", "heun"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def simulate(self, master_seed: int, path_indices, names) -> BlockOutput:
        p, grid = self.params, self.grid
        E0 = _initial_energy(self.E0, p, master_seed, path_indices)
        I0 = np.sqrt(2.0 * E0 / p.L)
        current = None
        if self.scheme == "exact":
            from scipy.signal import lfilter

            a, b = ou_exact_coefficients(p, grid.dt)
            drive = sample_normals(grid.n_steps, master_seed, path_indices, Stream.OU_EXACT) * b
            current = np.empty((len(path_indices), grid.n_nodes))
            current[:, 0] = I0
            current[:, 1:], _ = lfilter([1.0], [1.0, -a], drive, axis=-1, zi=(a * I0)[:, None])
            energy = 0.5 * p.L * current**2
        else:
            path = WienerPath(grid, sample_increments(grid, master_seed, path_indices))
            if self.scheme == "explicit":
                e = circuit.ito_energy_explicit(p, E0, path)
                energy, current = e.values, e.current
            elif self.scheme == "euler_maruyama":
                energy = stochint.euler_maruyama(stochint.energy_sde(p, "ito"), E0, path)
            else:
                energy = stochint.stratonovich_heun(stochint.energy_sde(p, "stratonovich"), E0, path)
        series = {}
        if "energy" in names:
            series["energy"] = energy
        if "power" in names:
            series["power"] = circuit.power_from_energy(p, energy)
        if "current" in names:
            if current is None:
                raise ValueError(f"scheme {self.scheme!r} does not produce a signed current")
            series["current"] = current
        return BlockOutput(series, np.zeros(len(path_indices), dtype=bool))


@dataclass(frozen=True)
class SpuriousCircuit:
    """Overline or underline family member driven by each path."""

    params: CircuitParams
    grid: TimeGrid
    schedule: circuit.ScheduleSpec
    E0: float | str = 0.0
    observables = ("energy", "power", "current", "zero")

    @property
    def kind(self) -> str:
        return self.schedule.family

    def schedule_for(self, master_seed: int, path_index: int) -> circuit.RestartSchedule:
        return self.schedule.realize(SeedSpec(master_seed, int(path_index)))

    def simulate(self, master_seed: int, path_indices, names) -> BlockOutput:
        p, grid = self.params, self.grid
        E0 = _initial_energy(self.E0, p, master_seed, path_indices)
        inc = sample_increments(grid, master_seed, path_indices)
        J = discounted_integral(inc, p.rate, grid.dt)
        del inc
        current = np.empty((len(path_indices), grid.n_nodes))
        failed = np.zeros(len(path_indices), dtype=bool)
        for row, idx in enumerate(path_indices):
            sched = self.schedule_for(master_seed, idx)
            try:
                e, _ = circuit.build_from_integral(p, E0[row], grid, J[row], sched, self.kind)
            except circuit.IncompleteConstruction as exc:
                e = exc.energy
                failed[row] = True
            current[row] = e.current
        energy = 0.5 * p.L * current**2
        series = {}
        if "energy" in names:
            series["energy"] = energy
        if "power" in names:
            series["power"] = circuit.power_from_energy(p, energy)
        if "current" in names:
            series["current"] = current
        if "zero" in names:
            series["zero"] = (energy == 0.0).astype(float)
        return BlockOutput(series, failed)


@dataclass(frozen=True)
class BsdeExperiment:
    particle: bsde.ParticleParams
    psi: bsde.PsiSpec
    dt: float
    X0: float = 0.0
    kind = "bsde"
    observables = ("V", "sigma", "U", "F", "X", "W")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_horizon(self.dt, self.particle.T)

    def simulate(self, master_seed: int, path_indices, names) -> BlockOutput:
        grid = self.grid
        path = WienerPath(grid, sample_increments(grid, master_seed, path_indices))
        pair = bsde.solve_pair(self.particle, self.psi, path)
        n = len(path_indices)
        series = {}
        if "V" in names:
            series["V"] = pair.V
        if "sigma" in names:
            series["sigma"] = np.broadcast_to(pair.sigma, (n, grid.n_nodes))
        if "U" in names:
            series["U"] = bsde.martingale_scaled(pair, self.particle)
        if "F" in names:
            series["F"] = np.broadcast_to(np.asarray(pair.F)[:, None], (n, grid.n_nodes))
        if "X" in names:
            series["X"] = bsde.integrate_position(pair.V, self.X0, grid.dt)
        if "W" in names:
            series["W"] = path.values
        return BlockOutput(series, np.zeros(n, dtype=bool))


@dataclass(frozen=True)
class AlphaExperiment:
    """Integral of a Brownian path against itself with evaluation point ``alpha``.

    ``current`` is the resistance-free circuit ``I_0 + (V/L) * integral``.
    """

    alpha: float
    grid: TimeGrid
    V: float = 1.0
    L: float = 1.0
    I0: float = 0.0
    kind = "alpha"
    observables = ("integral", "current", "B")

    def __post_init__(self):
        stochint.AlphaRule(self.alpha)

    def simulate(self, master_seed: int, path_indices, names) -> BlockOutput:
        grid = self.grid
        path = WienerPath(grid, sample_increments(grid, master_seed, path_indices))
        running = stochint.alpha_integral_path(path.values, path, self.alpha)
        series = {}
        if "integral" in names:
            series["integral"] = running
        if "current" in names:
            series["current"] = stochint.ideal_circuit_current(self.I0, self.V, self.L, running)
        if "B" in names:
            series["B"] = path.values
        return BlockOutput(series, np.zeros(len(path_indices), dtype=bool))


EXPERIMENTS = {
    "physical": PhysicalCircuit,
    "overline": SpuriousCircuit,
    "underline": SpuriousCircuit,
    "bsde": BsdeExperiment,
    "alpha": AlphaExperiment,
}


# ---------------------------------------------------------------------------
# ensemble runner


class FailedPathBudget(RuntimeError):
    pass


@dataclass
class EnsembleResult:
    kind: str
    n_paths: int
    master_seed: int
    stats: dict
    n_failed: int
    observables: list
    trajectories: dict = field(default_factory=dict)

    @property
    def failed_fraction(self) -> float:
        return self.n_failed / self.n_paths

    @property
    def budget_ok(self) -> bool:
        return self.failed_fraction <= FAILED_PATH_BUDGET

    def raise_for_budget(self) -> None:
        if not self.budget_ok:
            raise FailedPathBudget(
                f"{self.n_failed} of {self.n_paths} paths failed "
                f"({self.failed_fraction:.3%} > {FAILED_PATH_BUDGET:.1%})"
            )

    def __getitem__(self, key) -> EnsembleStats:
        if isinstance(key, tuple):
            key = observable_key(*key)
        return self.stats[key]


def _block_size(n_nodes: int, n_paths: int) -> int:
    return max(1, min(n_paths, 1024, _BLOCK_ELEMENTS // n_nodes))


def run_ensemble(
    experiment,
    n_paths: int,
    master_seed: int,
    observables,
    threads: int | None = None,
    block_size: int | None = None,
    keep_paths: int = 0,
    include_failed: bool = False,
) -> EnsembleResult:
    """Run ``experiment`` on paths ``0 .. n_paths-1`` and summarize the observables.

    ``observables`` is a sequence of ``(name, time)`` pairs.  Failed paths
    (incomplete spurious constructions) are left out of the statistics unless
    ``include_failed`` is set; their count is reported either way.
    ``keep_paths`` stores full trajectories of the first paths for export.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    grid = experiment.grid
    observables = [(str(name), float(t)) for name, t in observables]
    for name, t in observables:
        if name not in experiment.observables:
            raise ValueError(
                f"{experiment.kind} experiment has no observable {name!r}; "
                f"choose from {', '.join(experiment.observables)}"
            )
        grid.index_of(t)
    names = {name for name, _ in observables}
    columns = [(observable_key(n, t), n, grid.index_of(t)) for n, t in observables]
    bs = block_size or _block_size(grid.n_nodes, n_paths)
    blocks = [np.arange(lo, min(lo + bs, n_paths)) for lo in range(0, n_paths, bs)]

    def run_block(indices):
        out = experiment.simulate(master_seed, indices, names)
        keep = ~out.failed if not include_failed else np.ones(len(indices), dtype=bool)
        stats = {
            key: EnsembleStats.from_values(out.series[name][keep, k]) for key, name, k in columns
        }
        kept = {}
        if keep_paths and indices[0] < keep_paths:
            m = min(len(indices), keep_paths - indices[0])
            kept = {name: np.array(out.series[name][:m]) for name in names}
        return stats, int(out.failed.sum()), kept

    workers = threads if threads is not None else (os.cpu_count() or 1)
    if workers <= 1:
        results = map(run_block, blocks)
        pool = None
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(run_block, blocks)
    try:
        totals = {key: EnsembleStats() for key, _, _ in columns}
        n_failed = 0
        trajectories = {}
        for stats, failed, kept in results:
            for key in totals:
                totals[key] = totals[key].merge(stats[key])
            n_failed += failed
            for name, arr in kept.items():
                trajectories.setdefault(name, []).append(arr)
    finally:
        if pool is not None:
            pool.shutdown()
    trajectories = {name: np.concatenate(parts) for name, parts in trajectories.items()}
    return EnsembleResult(
        kind=experiment.kind,
        n_paths=n_paths,
        master_seed=master_seed,
        stats=totals,
        n_failed=n_failed,
        observables=observables,
        trajectories=trajectories,
    )


@dataclass(frozen=True)
class ZeroFraction:
    fraction: float
    n_zero: int
    n_paths: int
    n_incomplete: int


def almost_sure_zero_fraction(
    experiment: SpuriousCircuit,
    t_check: float,
    n_paths: int,
    master_seed: int = 0,
    threads: int | None = None,
) -> ZeroFraction:
    """Fraction of paths whose energy is exactly zero at ``t_check``.

    Incomplete constructions still contribute their (exact) partial values and
    are counted separately.
    """
    if experiment.schedule.family != "underline":
        raise ValueError("the almost-sure collapse applies to the underline family")
    res = run_ensemble(
        experiment, n_paths, master_seed, [("zero", t_check)], threads=threads, include_failed=True
    )
    stats = res["zero", t_check]
    n_zero = int(round(stats.mean * stats.n))
    return ZeroFraction(n_zero / n_paths, n_zero, n_paths, res.n_failed)
