import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdrlab.circuit import ito_energy_explicit
from fdrlab.randpath import CircuitParams, SeedSpec, TimeGrid, WienerPath, sample_increments, sample_wiener
from fdrlab.stochint import (
    ITO,
    STRATONOVICH,
    AlphaRule,
    SdeSpec,
    alpha_integral,
    alpha_integral_law,
    alpha_integral_path,
    energy_sde,
    euler_maruyama,
    heun_step,
    ideal_circuit_current,
    power_sde,
    stratonovich_heun,
)


def _const_spec(drift, diffusion, interp="ito", clamp=True):
    return SdeSpec(lambda x, t: drift(x), lambda x, t: diffusion(x), interp, clamp)


def test_alpha_rule_bounds():
    assert ITO.alpha == 0.0 and STRATONOVICH.alpha == 0.5
    with pytest.raises(ValueError):
        AlphaRule(1.5)
    with pytest.raises(ValueError):
        AlphaRule(-0.1)


def test_alpha_integral_two_step_example():
    g = TimeGrid.from_horizon(0.5, 1.0)
    B = WienerPath.from_values(g, [0.0, 1.0, 1.0])
    # sum_k (alpha B_{k+1} + (1-alpha) B_k) dB_k with dB = (1, 0)
    assert alpha_integral(B.values, B, 0.0) == 0.0
    assert alpha_integral(B.values, B, 1.0) == 1.0
    assert alpha_integral(B.values, B, 0.5) == 0.5


def test_alpha_integral_zero_integrand():
    w = sample_wiener(TimeGrid.from_horizon(0.01, 1.0), SeedSpec(0))
    for alpha in (0.0, 0.3, 1.0):
        assert alpha_integral(np.zeros(101), w, alpha) == 0.0


def test_alpha_integral_rejects_mismatched_grids():
    w = sample_wiener(TimeGrid.from_horizon(0.01, 1.0), SeedSpec(0))
    other = sample_wiener(TimeGrid.from_horizon(0.02, 1.0), SeedSpec(0))
    with pytest.raises(ValueError):
        alpha_integral(other, w, 0.0)
    with pytest.raises(ValueError):
        alpha_integral(np.zeros(50), w, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.integers(1, 200))
def test_telescoping_identity(seed, alpha, n):
    """S_alpha - S_0 = alpha * sum dB^2 on every path."""
    g = TimeGrid(dt=1.0 / n, n_steps=n)
    w = sample_wiener(g, SeedSpec(seed))
    diff = alpha_integral(w, w, alpha) - alpha_integral(w, w, 0.0)
    assert diff == pytest.approx(alpha * np.sum(w.increments**2), rel=1e-9, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_discrete_law_identity(seed, alpha):
    """Discrete analogue: S_alpha = B_T^2/2 + (alpha - 1/2) sum dB^2."""
    g = TimeGrid.from_horizon(0.01, 1.0)
    w = sample_wiener(g, SeedSpec(seed))
    qv = np.sum(w.increments**2)
    expected = 0.5 * w.values[-1] ** 2 + (alpha - 0.5) * qv
    assert alpha_integral(w, w, alpha) == pytest.approx(expected, abs=1e-10)


def test_alpha_law_closed_form():
    assert alpha_integral_law(2.0, 1.0, 0.0) == pytest.approx(1.5)
    assert alpha_integral_law(2.0, 1.0, 1.0) == pytest.approx(2.5)


def test_alpha_integral_path_final_value():
    w = sample_wiener(TimeGrid.from_horizon(0.01, 1.0), SeedSpec(3))
    running = alpha_integral_path(w.values, w, 0.5)
    assert running[0] == 0.0
    assert running[-1] == pytest.approx(alpha_integral(w.values, w, 0.5))
    assert running[-1] == pytest.approx(0.5 * w.values[-1] ** 2)


def test_ideal_current_prefactor():
    assert ideal_circuit_current(1.0, 2.0, 4.0, 3.0) == pytest.approx(2.5)


def test_alpha_integral_moments():
    """10^4 paths at t=1: mean alpha within 3 SE, Ito variance about 1/2."""
    g = TimeGrid.from_horizon(1e-3, 1.0)
    w = WienerPath(g, sample_increments(g, 1, np.arange(10_000)))
    for alpha in (0.0, 0.5, 1.0):
        s = alpha_integral(w, w, alpha)
        se = s.std(ddof=1) / np.sqrt(s.size)
        assert abs(s.mean() - alpha) <= 3 * se
    s0 = alpha_integral(w, w, 0.0)
    assert s0.var(ddof=1) == pytest.approx(0.5, rel=0.05)


def test_em_constant_trajectory():
    g = TimeGrid.from_horizon(0.1, 1.0)
    w = sample_wiener(g, SeedSpec(0))
    x = euler_maruyama(_const_spec(lambda x: 0.0 * x, lambda x: 0.0 * x), 3.0, w)
    assert np.all(x == 3.0)


def test_em_ode_oracle():
    g = TimeGrid.from_horizon(1e-4, 1.0)
    w = WienerPath(g, np.zeros(g.n_steps))
    x = euler_maruyama(_const_spec(lambda x: -x, lambda x: 0.0 * x), 1.0, w)
    assert x[-1] == pytest.approx(np.exp(-1.0), abs=1e-3)


def test_heun_ode_oracle():
    g = TimeGrid.from_horizon(1e-4, 1.0)
    w = WienerPath(g, np.zeros(g.n_steps))
    spec = _const_spec(lambda x: -2 * x, lambda x: 0.0 * x, "stratonovich")
    x = stratonovich_heun(spec, 1.0, w)
    assert x[-1] == pytest.approx(np.exp(-2.0), abs=1e-3)
    # second-order ODE scheme: far better than the stated tolerance
    assert abs(x[-1] - np.exp(-2.0)) < 1e-8


def test_heun_zero_is_equilibrium():
    p = CircuitParams(1.0, 1.0, np.sqrt(2.0))
    g = TimeGrid.from_horizon(0.01, 1.0)
    x = stratonovich_heun(energy_sde(p, "stratonovich"), 0.0, WienerPath(g, np.zeros(100)))
    assert np.all(x == 0.0)
    # and stays there on a noisy path too: sqrt(0) kills the noise
    w = sample_wiener(g, SeedSpec(5))
    assert np.all(stratonovich_heun(energy_sde(p, "stratonovich"), 0.0, w) == 0.0)


def test_ito_leaves_zero_immediately():
    p = CircuitParams(1.0, 1.0, np.sqrt(2.0))
    g = TimeGrid.from_horizon(0.01, 0.1)
    x = euler_maruyama(energy_sde(p, "ito"), 0.0, WienerPath(g, np.zeros(10)))
    assert x[1] == pytest.approx(p.V**2 / (2 * p.L) * g.dt)


def test_interpretation_guards():
    p = CircuitParams(1.0, 1.0, 1.0)
    w = sample_wiener(TimeGrid.from_horizon(0.1, 1.0), SeedSpec(0))
    with pytest.raises(ValueError):
        euler_maruyama(energy_sde(p, "stratonovich"), 1.0, w)
    with pytest.raises(ValueError):
        stratonovich_heun(energy_sde(p, "ito"), 1.0, w)
    with pytest.raises(ValueError):
        SdeSpec(lambda x, t: x, lambda x, t: x, "other")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
def test_schemes_preserve_non_negativity(seed, E0):
    p = CircuitParams(1.0, 1.0, 2.0)
    w = sample_wiener(TimeGrid.from_horizon(0.05, 5.0), SeedSpec(seed))
    assert np.all(euler_maruyama(energy_sde(p, "ito"), E0, w) >= 0)
    assert np.all(stratonovich_heun(energy_sde(p, "stratonovich"), E0, w) >= 0)


def test_power_sde_is_scaled_energy_sde():
    p = CircuitParams(L=2.0, R=3.0, V=1.5)
    e, d = energy_sde(p, "ito"), power_sde(p, "ito")
    k = 2 * p.R / p.L
    x = np.linspace(0, 2, 7)
    assert np.allclose(d.drift(k * x, 0), k * e.drift(x, 0))
    assert np.allclose(d.diffusion(k * x, 0), k * e.diffusion(x, 0))


def _strong_errors(dts, n_paths=200):
    """Median |EM - explicit| at t=1 on a common fine path, per dt."""
    p = CircuitParams(L=1.0, R=1.0, V=1.0)
    fine = TimeGrid.from_horizon(dts[-1], 1.0)
    w = WienerPath(fine, sample_increments(fine, 77, np.arange(n_paths)))
    E0 = 2.0
    out = []
    for dt in dts:
        c = w.coarsen(int(round(dt / fine.dt)))
        em = euler_maruyama(energy_sde(p, "ito"), E0, c)[:, -1]
        oracle = ito_energy_explicit(p, E0, w).values[:, -1]
        out.append(float(np.median(np.abs(em - oracle))))
    return out


def test_em_strong_convergence_monotone():
    errs = _strong_errors([1e-2, 5e-3, 2.5e-3])
    assert errs[0] > errs[1] > errs[2]


def test_heun_and_em_agree_before_first_zero():
    p = CircuitParams(L=1.0, R=1.0, V=1.0)
    g = TimeGrid.from_horizon(1e-4, 1.0)
    w = WienerPath(g, sample_increments(g, 8, np.arange(20)))
    E0 = 2.0
    ito = euler_maruyama(energy_sde(p, "ito"), E0, w)
    strat = stratonovich_heun(energy_sde(p, "stratonovich"), E0, w)
    cur = ito_energy_explicit(p, E0, w).current
    for row in range(20):
        zero = np.flatnonzero(np.sign(cur[row]) != np.sign(cur[row, 0]))
        stop = zero[0] if zero.size else g.n_nodes
        assert np.max(np.abs(ito[row, :stop] - strat[row, :stop])) < 0.05


def test_heun_step_vectorizes():
    p = CircuitParams(1.0, 1.0, 1.0)
    spec = energy_sde(p, "stratonovich")
    xs = np.array([0.0, 0.5, 1.0])
    dB = np.array([0.1, -0.1, 0.2])
    batch = heun_step(spec, xs, 0.0, 0.01, dB)
    single = [heun_step(spec, x, 0.0, 0.01, b) for x, b in zip(xs, dB)]
    assert np.allclose(batch, single)
