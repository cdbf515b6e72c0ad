import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdrlab import mc
from fdrlab.bsde import ParticleParams, PsiSpec
from fdrlab.circuit import Duration, ScheduleSpec, ito_energy_explicit
from fdrlab.randpath import CircuitParams, SeedSpec, TimeGrid, sample_wiener

P = CircuitParams(L=1.0, R=1.0, V=math.sqrt(2.0))


# --- statistics -------------------------------------------------------------


def test_stats_from_values_match_numpy():
    x = np.random.default_rng(0).normal(size=500)
    s = mc.EnsembleStats.from_values(x)
    assert s.n == 500
    assert s.mean == pytest.approx(x.mean())
    assert s.variance == pytest.approx(x.var(ddof=1))
    assert s.standard_error == pytest.approx(x.std(ddof=1) / math.sqrt(500))
    assert (s.min, s.max) == (x.min(), x.max())


def test_welford_update_matches_batch():
    x = np.random.default_rng(1).normal(size=200)
    s = mc.EnsembleStats()
    for v in x:
        s.update(float(v))
    b = mc.EnsembleStats.from_values(x)
    assert s.mean == pytest.approx(b.mean, rel=1e-12)
    assert s.variance == pytest.approx(b.variance, rel=1e-12)


def test_single_sample_variance_undefined():
    s = mc.EnsembleStats.from_values([2.5])
    assert s.mean == 2.5 and math.isnan(s.variance)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(1, 4000), min_size=1, max_size=8),
    st.randoms(use_true_random=False),
)
def test_merge_order_invariance(cuts, rnd):
    """Any partition of 10^4 values merged in any order: < 1e-9 relative change."""
    x = np.random.default_rng(7).normal(loc=3.0, size=10_000)
    edges = sorted({min(c, 9999) for c in cuts})
    parts = np.split(x, edges)
    blocks = [mc.EnsembleStats.from_values(p) for p in parts]
    rnd.shuffle(blocks)
    total = mc.EnsembleStats()
    for b in blocks:
        total = total + b
    ref = mc.EnsembleStats.from_values(x)
    assert total.n == ref.n
    assert abs(total.mean - ref.mean) <= 1e-9 * abs(ref.mean)
    assert abs(total.variance - ref.variance) <= 1e-9 * ref.variance


def test_merge_associative_three_blocks():
    rng = np.random.default_rng(3)
    a, b, c = (mc.EnsembleStats.from_values(rng.normal(size=n)) for n in (10, 300, 57))
    left, right = (a + b) + c, a + (b + c)
    assert left.mean == pytest.approx(right.mean, rel=1e-9)
    assert left.variance == pytest.approx(right.variance, rel=1e-9)


# --- checks -----------------------------------------------------------------


def _stats(mean, se, n=10_000):
    var = se**2 * n
    return mc.EnsembleStats(n=n, mean=mean, m2=var * (n - 1))


def test_convergence_check_verdict():
    assert mc.check_convergence(_stats(0.52, 0.01), 0.5).passed
    assert not mc.check_convergence(_stats(0.54, 0.01), 0.5).passed
    c = mc.check_convergence(_stats(0.54, 0.01), 0.5, k=5)
    assert c.passed and c.deviation_se == pytest.approx(4.0)


def test_equipartition_examples():
    p = CircuitParams(L=1.0, R=2.0, V=2.0)
    ok = mc.check_equipartition(_stats(0.5, 1e-6), p)
    assert ok.passed and ok.details["equipartition_exact"]
    assert not mc.check_equipartition(_stats(0.9, 0.01), p).passed
    off = mc.check_equipartition(_stats(0.5, 1e-6), CircuitParams(1.0, 2.0, 2.1))
    assert not off.details["equipartition_exact"]


def test_equipartition_rejects_underpowered_and_early():
    with pytest.raises(ValueError):
        mc.check_equipartition(_stats(0.5, 0.01, n=50), P)
    with pytest.raises(ValueError):
        mc.check_equipartition(_stats(0.5, 0.01), P, t=1.0)


def test_bound_check():
    assert mc.check_upper_bound(_stats(0.0, 0.0), 0.01).passed
    assert not mc.check_upper_bound(_stats(0.5, 0.01), 0.01).passed


# --- ensembles --------------------------------------------------------------

GRID = TimeGrid.from_horizon(1e-2, 2.0)


def test_single_path_stats_equal_path_value():
    exp = mc.PhysicalCircuit(P, GRID, E0=0.3)
    res = mc.run_ensemble(exp, 1, 5, [("energy", 1.0)])
    direct = ito_energy_explicit(P, 0.3, sample_wiener(GRID, SeedSpec(5, 0))).values[100]
    s = res["energy", 1.0]
    assert s.n == 1 and s.mean == direct


def test_run_twice_bit_identical():
    exp = mc.PhysicalCircuit(P, GRID)
    a = mc.run_ensemble(exp, 3000, 9, [("energy", 2.0)], threads=1)
    b = mc.run_ensemble(exp, 3000, 9, [("energy", 2.0)], threads=1)
    assert a.stats == b.stats


def test_thread_count_does_not_change_results():
    exp = mc.SpuriousCircuit(
        P, TimeGrid.from_horizon(1e-2, 10.0), ScheduleSpec(1, Duration(0.5), Duration(0.5), "overline")
    )
    obs = [("energy", 10.0), ("power", 5.0)]
    runs = [mc.run_ensemble(exp, 2500, 4, obs, threads=t, block_size=300) for t in (1, 2, 4)]
    assert runs[0].stats == runs[1].stats == runs[2].stats
    assert runs[0].n_failed == runs[2].n_failed


def test_seed_isolation_and_observable_independence():
    exp = mc.PhysicalCircuit(P, GRID)
    a = mc.run_ensemble(exp, 500, 1, [("energy", 1.0)])
    b = mc.run_ensemble(exp, 500, 2, [("energy", 1.0)])
    c = mc.run_ensemble(exp, 500, 1, [("power", 2.0), ("energy", 1.0), ("current", 0.5)])
    assert a["energy", 1.0].mean != b["energy", 1.0].mean
    assert a["energy", 1.0] == c["energy", 1.0]


def test_se_scales_with_root_n():
    exp = mc.PhysicalCircuit(P, GRID)
    ratios = []
    for seed in range(3):
        s1 = mc.run_ensemble(exp, 4000, seed, [("energy", 2.0)])["energy", 2.0]
        s2 = mc.run_ensemble(exp, 8000, seed + 100, [("energy", 2.0)])["energy", 2.0]
        ratios.append(s1.standard_error / s2.standard_error)
    assert np.mean(ratios) == pytest.approx(math.sqrt(2.0), rel=0.1)


def test_unknown_observable_and_off_grid_time():
    exp = mc.PhysicalCircuit(P, GRID)
    with pytest.raises(ValueError):
        mc.run_ensemble(exp, 10, 0, [("zero", 1.0)])
    with pytest.raises(ValueError):
        mc.run_ensemble(exp, 10, 0, [("energy", 1.005)])


def test_physical_schemes_share_the_mean():
    g = TimeGrid.from_horizon(1e-2, 1.0)
    means = {}
    for scheme in ("explicit", "exact", "euler_maruyama"):
        s = mc.run_ensemble(mc.PhysicalCircuit(P, g, 0.0, scheme), 20_000, 3, [("energy", 1.0)])
        means[scheme] = s["energy", 1.0]
    target = 0.5 * (1 - math.exp(-2.0))
    for s in means.values():
        assert abs(s.mean - target) <= 4 * s.standard_error + 0.01


def test_heun_scheme_stays_at_zero():
    res = mc.run_ensemble(mc.PhysicalCircuit(P, GRID, 0.0, "heun"), 200, 0, [("energy", 2.0)])
    assert res["energy", 2.0].max == 0.0


def test_equilibrium_initial_energy_is_stationary():
    exp = mc.PhysicalCircuit(P, GRID, E0="equilibrium")
    res = mc.run_ensemble(exp, 20_000, 1, [("energy", 0.0), ("energy", 2.0)])
    for t in (0.0, 2.0):
        s = res["energy", t]
        assert abs(s.mean - 0.5) <= 3 * s.standard_error


def test_failed_path_budget():
    exp = mc.SpuriousCircuit(
        P, TimeGrid.from_horizon(1e-2, 1.0), ScheduleSpec(2, Duration(0.5), Duration(0.5), "overline")
    )
    res = mc.run_ensemble(exp, 200, 0, [("energy", 1.0)])
    assert res.n_failed == 200 and not res.budget_ok
    assert res["energy", 1.0].n == 0
    with pytest.raises(mc.FailedPathBudget):
        res.raise_for_budget()
    kept = mc.run_ensemble(exp, 200, 0, [("energy", 1.0)], include_failed=True)
    assert kept["energy", 1.0].n == 200


def test_keep_paths_exports_first_trajectories():
    exp = mc.PhysicalCircuit(P, GRID)
    res = mc.run_ensemble(exp, 50, 3, [("energy", 1.0)], keep_paths=4, block_size=3)
    traj = res.trajectories["energy"]
    assert traj.shape == (4, GRID.n_nodes)
    direct = ito_energy_explicit(P, 0.0, sample_wiener(GRID, SeedSpec(3, 2))).values
    assert np.array_equal(traj[2], direct)


def test_zero_fraction_before_first_stop():
    exp = mc.SpuriousCircuit(
        P, TimeGrid.from_horizon(1e-2, 20.0), ScheduleSpec(2, Duration(0.5), Duration(0.5), "underline")
    )
    assert mc.almost_sure_zero_fraction(exp, 0.4, 500).fraction == 0.0


def test_zero_fraction_n0_from_positive_energy():
    p = CircuitParams(L=1.0, R=1.0, V=1.0)
    exp = mc.SpuriousCircuit(
        p,
        TimeGrid.from_horizon(1e-2, 50.0),
        ScheduleSpec(0, Duration(0.01), Duration(0.0), "underline"),
        E0=0.5,
    )
    zf = mc.almost_sure_zero_fraction(exp, 50.0, 10_000, master_seed=3)
    assert zf.fraction >= 0.999


def test_zero_fraction_requires_underline():
    exp = mc.SpuriousCircuit(
        P, GRID, ScheduleSpec(1, Duration(0.5), Duration(0.5), "overline")
    )
    with pytest.raises(ValueError):
        mc.almost_sure_zero_fraction(exp, 1.0, 10)


def test_bsde_and_alpha_experiments_run():
    b = mc.BsdeExperiment(ParticleParams(1.0, 1.0, 1.0), PsiSpec("ou_form"), 1e-2)
    res = mc.run_ensemble(b, 2000, 0, [("F", 1.0), ("sigma", 0.0), ("U", 0.5), ("X", 1.0), ("W", 1.0)])
    assert res["sigma", 0.0].mean == pytest.approx(1.520866623, abs=1e-8)
    a = mc.AlphaExperiment(1.0, TimeGrid.from_horizon(1e-2, 1.0))
    res = mc.run_ensemble(a, 2000, 0, [("integral", 1.0), ("B", 1.0)])
    assert abs(res["integral", 1.0].mean - 1.0) <= 3 * res["integral", 1.0].standard_error
