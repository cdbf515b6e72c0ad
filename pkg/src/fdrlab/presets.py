"""Named experiments and the verification suite built on them.

``CONFIGS`` holds ready-to-run configuration texts for ``fdrlab simulate``.
``VERIFY`` maps a suite name to a function that runs the corresponding
ensembles and returns one :class:`VerifyRow` per claim.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import bsde, circuit, mc
from .config import SEED_ENV, ExperimentConfig
from .randpath import TimeGrid, WienerPath, sample_increments

__all__ = ["CONFIGS", "VERIFY", "VerifyRow", "load_preset", "run_verify"]

_CIRCUIT_FDR = """
[circuit]
L = 1
R = 1
V = fdr
kB_tau = 1
"""

CONFIGS = {
    "equipartition-ito": f"""
[experiment]
kind = physical
id = equipartition-ito
scheme = explicit
n_paths = 100000
master_seed = 1
{_CIRCUIT_FDR}
[initial]
E0 = 0
[grid]
dt = 0.001
horizon = 10
[observables]
energy = 10
power = 10
[check]
kind = equipartition
observable = energy@10
[output]
plot = energy
plot_points = 51
trajectories = 3
""",
    "mean-transient": """
[experiment]
kind = physical
id = mean-transient
n_paths = 100000
master_seed = 2
[circuit]
L = 1
R = 1
V = 2
kB_tau = 1
[initial]
E0 = 0
[grid]
dt = 0.001
horizon = 0.5
[observables]
energy = 0.5
[check]
kind = target
observable = energy@0.5
target = 0.6321205588285577
[output]
plot = energy
plot_points = 26
""",
    "power-physical": f"""
[experiment]
kind = physical
id = power-physical
n_paths = 100000
master_seed = 1
{_CIRCUIT_FDR}
[grid]
dt = 0.001
horizon = 10
[observables]
power = 10
[check]
kind = target
observable = power@10
target = 1
""",
    "overline-theorem": f"""
[experiment]
kind = overline
id = overline-theorem
n_paths = 100000
master_seed = 2024
{_CIRCUIT_FDR}
[grid]
dt = 0.001
horizon = 20
[schedule]
N = 2
lambda = 0.5
mu = 0.5
[observables]
energy = 20
power = 20
[check]
kind = target
observable = energy@20
target = 0.5
[output]
plot = energy
plot_points = 41
trajectories = 3
""",
    "power-overline": f"""
[experiment]
kind = overline
id = power-overline
n_paths = 100000
master_seed = 2024
{_CIRCUIT_FDR}
[grid]
dt = 0.001
horizon = 20
[schedule]
N = 2
lambda = 0.5
mu = 0.5
[observables]
power = 20
[check]
kind = target
observable = power@20
target = 2
""",
    "underline-collapse": f"""
[experiment]
kind = underline
id = underline-collapse
n_paths = 10000
master_seed = 7
{_CIRCUIT_FDR}
[grid]
dt = 0.001
horizon = 20
[schedule]
N = 2
lambda = 0.5
mu = 0.5
[observables]
energy = 20
zero = 20
[check]
kind = zero_fraction
observable = zero@20
min_fraction = 0.99
[output]
plot = zero
plot_points = 41
trajectories = 3
""",
    "bsde-ou": """
[experiment]
kind = bsde
id = bsde-ou
n_paths = 100000
master_seed = 11
[particle]
gamma = 1
kB_tau = 1
T = 1
[psi]
kind = ou_form
[grid]
dt = 0.001
[observables]
F = 1
V = 0.5, 1
sigma = 0, 1
[check]
kind = target
observable = V@0.5
target = 0
[output]
plot = V
plot_points = 21
""",
}

for _alpha, _name in ((0.0, "ito"), (0.5, "stratonovich"), (1.0, "anticipating")):
    CONFIGS[f"alpha-{_name}"] = f"""
[experiment]
kind = alpha
id = alpha-{_name}
n_paths = 100000
master_seed = 5
[alpha]
alpha = {_alpha:g}
[grid]
dt = 0.001
horizon = 1
[observables]
integral = 1
current = 1
[check]
kind = target
observable = integral@1
target = {_alpha:g}
[output]
plot = integral
plot_points = 21
"""


def load_preset(name: str, env: dict | None = None) -> ExperimentConfig:
    if name not in CONFIGS:
        raise KeyError(name)
    return ExperimentConfig.from_text(CONFIGS[name], source=f"preset:{name}", env=env)


# ---------------------------------------------------------------------------
# verification suite


@dataclass(frozen=True)
class VerifyRow:
    suite: str
    claim: str
    passed: bool
    detail: str


def _config(name, paths, seed, env):
    cfg = load_preset(name, env=env)
    if paths is not None:
        cfg.raw["experiment"]["n_paths"] = str(paths)
    if seed is not None:
        cfg.raw["experiment"]["master_seed"] = str(seed)
    cfg.validate()
    return cfg


def _target_row(suite, claim, stats, target, k=3.0):
    check = mc.check_convergence(stats, target, k)
    return VerifyRow(
        suite,
        claim,
        check.passed,
        f"mean={stats.mean:.6g} target={target:.6g} SE={stats.standard_error:.3g} "
        f"({check.deviation_se:.2f} SE)",
    )


def _budget_row(suite, res):
    return VerifyRow(
        suite,
        "failed-path fraction < 0.1%",
        res.failed_fraction < mc.FAILED_PATH_BUDGET,
        f"{res.n_failed}/{res.n_paths} failed",
    )


def _run(cfg, threads):
    return mc.run_ensemble(
        cfg.build_experiment(), cfg.n_paths, cfg.master_seed, cfg.observables(), threads=threads
    )


def verify_equipartition(paths=None, seed=None, threads=None, env=None):
    suite = "equipartition-ito"
    cfg = _config(suite, paths, seed, env)
    exp = cfg.build_experiment()
    res = _run(cfg, threads)
    check = mc.check_equipartition(res["energy", 10.0], exp.params, t=10.0)
    return [
        VerifyRow(suite, "E[energy@10] -> V^2/4R", check.passed, check.describe()),
        VerifyRow(
            suite,
            "V^2/4R equals kB_tau/2",
            check.details["equipartition_exact"],
            f"V^2/4R={exp.params.stationary_energy:.15g} kB_tau/2={check.details['half_kB_tau']:g}",
        ),
    ]


def verify_mean_transient(paths=None, seed=None, threads=None, env=None):
    suite = "mean-transient"
    cfg = _config(suite, paths, seed, env)
    exp = cfg.build_experiment()
    res = _run(cfg, threads)
    target = float(circuit.mean_energy(exp.params, 0.0, 0.5))
    return [_target_row(suite, "E[energy@0.5] = (V^2/4R)(1 - e^{-2Rt/L})", res["energy", 0.5], target)]


def verify_overline(paths=None, seed=None, threads=None, env=None):
    suite = "overline-theorem"
    cfg = _config(suite, paths, seed, env)
    exp = cfg.build_experiment()
    res = _run(cfg, threads)
    return [
        _target_row(suite, "E[overline energy@20] -> V^2/4R", res["energy", 20.0], exp.params.stationary_energy),
        _budget_row(suite, res),
    ]


def verify_underline(paths=None, seed=None, threads=None, env=None):
    suite = "underline-collapse"
    cfg = _config(suite, paths, seed, env)
    exp = cfg.build_experiment()
    zf = mc.almost_sure_zero_fraction(exp, 20.0, cfg.n_paths, cfg.master_seed, threads=threads)
    res = _run(cfg, threads)
    energy = res["energy", 20.0]
    half = mc.check_convergence(energy, 0.5)
    bound = mc.check_upper_bound(energy, 0.01)
    return [
        VerifyRow(
            suite,
            "fraction of exact zeros at t=20 >= 0.99",
            zf.fraction >= 0.99,
            f"{zf.n_zero}/{zf.n_paths} zero ({zf.fraction:.4f}), {zf.n_incomplete} incomplete",
        ),
        VerifyRow(suite, "energy@20 fails the 0.5 check", not half.passed, half.describe()),
        VerifyRow(suite, "energy@20 <= 0.01", bound.passed, bound.describe()),
    ]


def verify_power(paths=None, seed=None, threads=None, env=None):
    suite = "power-limits"
    phys = _config("power-physical", paths, seed, env)
    p = phys.build_experiment().params
    res_p = _run(phys, threads)
    over = _config("power-overline", paths, seed, env)
    res_o = _run(over, threads)
    stats_o = res_o["power", 20.0]
    return [
        _target_row(suite, "physical E[power@10] -> kB_tau R/L", res_p["power", 10.0], p.kB_tau * p.R / p.L),
        _target_row(suite, "overline E[power@20] -> R V^2/L^2", stats_o, p.R * p.V**2 / p.L**2),
        _target_row(suite, "overline E[power@20] -> V^2/2L (2R/L times the energy limit)", stats_o, p.V**2 / (2 * p.L)),
        _budget_row(suite, res_o),
    ]


def verify_alpha(paths=None, seed=None, threads=None, env=None):
    suite = "alpha-mean"
    rows = []
    for name, alpha in (("ito", 0.0), ("stratonovich", 0.5), ("anticipating", 1.0)):
        cfg = _config(f"alpha-{name}", paths, seed, env)
        res = _run(cfg, threads)
        stats = res["integral", 1.0]
        rows.append(_target_row(suite, f"alpha={alpha:g}: E[int B dB] = alpha t", stats, alpha))
        if alpha == 0.0:
            rel = abs(stats.variance - 0.5) / 0.5
            rows.append(
                VerifyRow(suite, "alpha=0: Var = t^2/2 within 5%", rel <= 0.05, f"var={stats.variance:.5f} ({rel:.2%})")
            )
            cur = res["current", 1.0]
            rows.append(_target_row(suite, "alpha=0: E[I_t] = I_0 (isotropy)", cur, 0.0))
    return rows


def verify_bsde(paths=None, seed=None, threads=None, env=None):
    suite = "bsde-limit"
    rows = []
    psi = bsde.PsiSpec("ou_form")
    for T in (1.0, 5.0, 50.0):
        pp = bsde.ParticleParams(gamma=1.0, kB_tau=1.0, T=T)
        grid = TimeGrid.from_horizon(1e-3 if T <= 5 else 1e-2, T)
        pair = bsde.solve_pair(pp, psi, WienerPath(grid, np.zeros(grid.n_steps)))
        closed = math.sqrt(2.0) * ((-math.expm1(-2.0 * T)) ** -0.5 - 1.0)
        dev = float(np.max(np.abs(pair.sigma - bsde.fdr_limit_sigma(pp) - closed)))
        flat = float(np.ptp(pair.sigma))
        rows.append(
            VerifyRow(
                suite,
                f"T={T:g}: sigma - sqrt(2) matches closed form",
                dev <= 1e-10 and flat <= 1e-10,
                f"sigma={pair.sigma[0]:.10f} |error|={dev:.2e} spread={flat:.1e}",
            )
        )
        if T == 1.0:
            rows.append(
                VerifyRow(
                    suite,
                    "T=1: sigma = 1.520868 (to the quoted last digit)",
                    abs(pair.sigma[0] - 1.520868) <= 2e-6,
                    f"sigma={pair.sigma[0]:.9f}",
                )
            )
    cfg = _config("bsde-ou", paths, seed, env)
    exp = cfg.build_experiment()
    gap = 0.0
    var = mc.EnsembleStats()
    n, bs = cfg.n_paths, 4096
    for lo in range(0, n, bs):
        idx = np.arange(lo, min(lo + bs, n))
        path = WienerPath(exp.grid, sample_increments(exp.grid, cfg.master_seed, idx))
        pair = bsde.solve_pair(exp.particle, exp.psi, path)
        gap = max(gap, float(np.max(np.abs(pair.V[:, -1] - pair.F))))
        var = var.merge(mc.EnsembleStats.from_values(pair.F))
    rows.append(VerifyRow(suite, "|V_T - F| <= 1e-12 on every path", gap <= 1e-12, f"max gap {gap:.1e}"))
    rel = abs(var.variance - exp.particle.kB_tau) / exp.particle.kB_tau
    rows.append(
        VerifyRow(suite, "Var(F) = kB_tau within 2%", rel <= 0.02, f"var={var.variance:.5f} ({rel:.2%}, n={var.n})")
    )
    return rows


VERIFY = {
    "equipartition-ito": verify_equipartition,
    "mean-transient": verify_mean_transient,
    "overline-theorem": verify_overline,
    "underline-collapse": verify_underline,
    "power-limits": verify_power,
    "alpha-mean": verify_alpha,
    "bsde-limit": verify_bsde,
}


def run_verify(name: str, paths=None, seed=None, threads=None, env=None) -> list:
    """Rows of one suite, or of every suite for ``name == "all"``."""
    env = os.environ if env is None else env
    if seed is None and env.get(SEED_ENV):
        seed = int(env[SEED_ENV])
    names = list(VERIFY) if name == "all" else [name]
    rows = []
    for n in names:
        if n not in VERIFY:
            raise KeyError(n)
        rows.extend(VERIFY[n](paths, seed, threads, {}))
    return rows
