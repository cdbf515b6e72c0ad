"""Run a validated configuration and package the outcome as a result record."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, mc
from .config import ExperimentConfig

__all__ = ["ResultRecord", "RunOutput", "run_config", "evaluate_check", "plot_times"]


def _finite_or_none(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    return _finite_or_none(obj)


@dataclass
class ResultRecord:
    experiment_id: str
    kind: str
    config_hash: str
    config: dict
    n_paths: int
    master_seed: int
    n_failed: int
    failed_fraction: float
    observables: dict
    checks: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    tool_version: str = __version__

    @property
    def passed(self) -> bool:
        return all(c.get("verdict") == "pass" for c in self.checks)

    @property
    def budget_ok(self) -> bool:
        return self.failed_fraction <= mc.FAILED_PATH_BUDGET

    def to_json(self) -> str:
        return json.dumps(_clean(asdict(self)), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ResultRecord":
        data = json.loads(text)
        return cls(**data)

    def rebuild_config(self) -> ExperimentConfig:
        return ExperimentConfig.from_dict(self.config)


@dataclass
class RunOutput:
    record: ResultRecord
    result: mc.EnsembleResult
    plot: dict | None = None


def plot_times(grid, n_points: int) -> list:
    idx = np.unique(np.round(np.linspace(0, grid.n_steps, n_points)).astype(int))
    return [float(grid.time(int(k))) for k in idx]


def evaluate_check(cfg: ExperimentConfig, experiment, result: mc.EnsembleResult, threads=None):
    spec = cfg.check_spec()
    if spec is None:
        return []
    key = mc.observable_key(spec["name"], spec["t"])
    stats = result.stats[key]
    if spec["kind"] == "equipartition":
        check = mc.check_equipartition(stats, experiment.params, spec["t"], spec["k"])
        out = check.to_dict()
    elif spec["kind"] == "target":
        out = mc.check_convergence(stats, spec["target"], spec["k"], label=key).to_dict()
    elif spec["kind"] == "upper_bound":
        out = mc.check_upper_bound(stats, spec["bound"], label=key).to_dict()
    else:
        zf = mc.almost_sure_zero_fraction(
            experiment, spec["t"], cfg.n_paths, cfg.master_seed, threads=threads
        )
        out = {
            "label": "almost_sure_zero_fraction",
            "fraction": zf.fraction,
            "n_zero": zf.n_zero,
            "n_incomplete": zf.n_incomplete,
            "min_fraction": spec["min_fraction"],
            "verdict": "pass" if zf.fraction >= spec["min_fraction"] else "fail",
        }
    out["kind"] = spec["kind"]
    out["observable"] = key
    return [out]


def run_config(cfg: ExperimentConfig, threads: int | None = None) -> RunOutput:
    start = time.perf_counter()
    experiment = cfg.build_experiment()
    output = cfg.output_spec()
    observables = cfg.observables()
    extra = []
    if output["plot"]:
        extra = [
            (output["plot"], t)
            for t in plot_times(experiment.grid, output["plot_points"])
            if (output["plot"], t) not in observables
        ]
    result = mc.run_ensemble(
        experiment,
        cfg.n_paths,
        cfg.master_seed,
        observables + extra,
        threads=threads,
        keep_paths=min(output["trajectories"], cfg.n_paths),
    )
    checks = evaluate_check(cfg, experiment, result, threads)
    plot = None
    if output["plot"]:
        name = output["plot"]
        ts = sorted({t for n, t in observables + extra if n == name})
        plot = {"name": name, "times": ts, "stats": [result[name, t] for t in ts]}
    keys = [mc.observable_key(n, t) for n, t in observables]
    record = ResultRecord(
        experiment_id=cfg.experiment_id,
        kind=cfg.kind,
        config_hash=cfg.config_hash,
        config=cfg.to_dict(),
        n_paths=cfg.n_paths,
        master_seed=cfg.master_seed,
        n_failed=result.n_failed,
        failed_fraction=result.failed_fraction,
        observables={k: result.stats[k].to_dict() for k in keys},
        checks=checks,
        wall_clock_s=time.perf_counter() - start,
    )
    return RunOutput(record, result, plot)
