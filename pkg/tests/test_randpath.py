import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdrlab.randpath import (
    CircuitParams,
    SeedSpec,
    Stream,
    TimeGrid,
    WienerPath,
    discounted_integral,
    generator,
    ou_exact_coefficients,
    ou_exact_step,
    sample_increments,
    sample_normals,
    sample_wiener,
    simulate_current,
)


def test_grid_nodes_and_lookup():
    g = TimeGrid.from_horizon(0.1, 1.0)
    assert g.n_steps == 10 and g.n_nodes == 11
    assert g.t_end == pytest.approx(1.0)
    assert g.index_of(0.3) == 3
    assert g.index_at_or_after(0.25) == 3
    assert g.index_at_or_after(0.3) == 3
    with pytest.raises(ValueError):
        g.index_of(0.25)
    with pytest.raises(ValueError):
        TimeGrid.from_horizon(0.3, 1.0)
    with pytest.raises(ValueError):
        TimeGrid(dt=-0.1, n_steps=3)


def test_seed_key_packs_path_and_master():
    assert SeedSpec(5, 3).key == (3 << 64) | 5
    with pytest.raises(ValueError):
        SeedSpec(1, -1)


def test_generator_matches_raw_philox():
    # oracle: numpy Philox with the documented key and counter layout
    seed = SeedSpec(42, 7)
    ref = np.random.Generator(np.random.Philox(key=(7 << 64) | 42, counter=[0, 0, 0, 2]))
    assert np.array_equal(
        generator(seed, Stream.SCHEDULE).standard_normal(5), ref.standard_normal(5)
    )


def test_streams_are_disjoint():
    a = sample_normals(100, 3, [0], Stream.WIENER)
    b = sample_normals(100, 3, [0], Stream.OU_EXACT)
    assert not np.allclose(a, b)


def test_wiener_path_basic_structure():
    g = TimeGrid.from_horizon(0.01, 1.0)
    w = sample_wiener(g, SeedSpec(1))
    assert w.values[0] == 0.0
    assert np.allclose(np.diff(w.values), w.increments)
    with pytest.raises(ValueError):
        w.values[3] = 1.0


def test_sample_increments_rows_equal_single_paths():
    g = TimeGrid.from_horizon(0.01, 0.5)
    batch = sample_increments(g, 9, [4, 0, 17])
    for row, p in zip(batch, [4, 0, 17]):
        assert np.array_equal(row, sample_wiener(g, SeedSpec(9, p)).increments)


def test_adaptedness_prefix_is_bit_identical():
    """Extending the horizon leaves every earlier increment untouched."""
    short = sample_wiener(TimeGrid.from_horizon(0.01, 1.0), SeedSpec(3, 2))
    long = sample_wiener(TimeGrid.from_horizon(0.01, 5.0), SeedSpec(3, 2))
    assert np.array_equal(long.increments[: short.grid.n_steps], short.increments)


def test_coarsen_sums_increments():
    g = TimeGrid.from_horizon(0.01, 1.0)
    w = sample_wiener(g, SeedSpec(0))
    c = w.coarsen(10)
    assert c.grid.n_steps == 10
    assert np.allclose(c.values, w.values[::10])


def test_ou_coefficients_closed_form():
    p = CircuitParams(L=2.0, R=3.0, V=1.5)
    a, b = ou_exact_coefficients(p, 0.1)
    assert a == pytest.approx(np.exp(-0.15))
    # Var = V^2 (1 - e^{-2Rdt/L}) / (2 R L)
    assert b**2 == pytest.approx(1.5**2 * (1 - np.exp(-0.3)) / 12.0)
    assert ou_exact_step(2.0, p, 0.1, 0.0) == pytest.approx(2.0 * a)
    with pytest.raises(ValueError):
        ou_exact_step(1.0, p, 0.0, 0.0)


def test_ou_exact_moments_large_dt():
    """One exact step of length 10 relaxation times reaches the stationary law."""
    p = CircuitParams(L=1.0, R=1.0, V=np.sqrt(2.0))
    z = sample_normals(200_000, 1, [0], Stream.OU_EXACT)[0]
    x = ou_exact_step(3.0, p, 10.0, z)
    assert np.mean(x) == pytest.approx(0.0, abs=4 * np.sqrt(1 / 200_000))
    assert np.var(x) == pytest.approx(p.V**2 / (2 * p.R * p.L), rel=0.02)


def _discounted_loop(inc, rate, dt):
    # oracle: direct double loop
    n = len(inc)
    out = np.zeros(n + 1)
    for k in range(1, n + 1):
        out[k] = sum(np.exp(rate * (j - k) * dt) * inc[j] for j in range(k))
    return out


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=1, max_size=40),
    st.floats(0.0, 5.0),
    st.floats(0.01, 0.5),
)
def test_discounted_integral_matches_loop(inc, rate, dt):
    got = discounted_integral(np.array(inc), rate, dt)
    assert np.allclose(got, _discounted_loop(inc, rate, dt), atol=1e-12)


def test_discounted_integral_long_horizon_windowing():
    rng = np.random.default_rng(0)
    inc = rng.normal(size=3000) * 0.1
    got = discounted_integral(inc, 2.0, 0.1)  # rate*horizon = 600
    ref = np.zeros(3001)
    a = np.exp(-0.2)
    for k in range(3000):
        ref[k + 1] = a * (ref[k] + inc[k])
    assert np.allclose(got, ref, rtol=1e-10, atol=1e-14)


def test_current_from_path_is_exponential_euler():
    p = CircuitParams(L=1.0, R=2.0, V=1.0)
    g = TimeGrid.from_horizon(0.01, 1.0)
    w = sample_wiener(g, SeedSpec(4))
    cur = simulate_current(p, 0.7, g, path=w)
    a = np.exp(-p.rate * g.dt)
    ref = [0.7]
    for dB in w.increments:
        ref.append(a * (ref[-1] + p.V / p.L * dB))
    assert np.allclose(cur, ref, rtol=1e-12)


def test_current_modes_and_errors():
    p = CircuitParams(L=1.0, R=1.0, V=1.0)
    g = TimeGrid.from_horizon(0.1, 1.0)
    exact = simulate_current(p, 0.0, g, seed=SeedSpec(1), mode="exact")
    assert exact.shape == (11,) and exact[0] == 0.0
    with pytest.raises(ValueError):
        simulate_current(p, 0.0, g, mode="from_path")
    with pytest.raises(ValueError):
        simulate_current(p, 0.0, g, mode="nope", seed=SeedSpec(1))
    other = sample_wiener(TimeGrid.from_horizon(0.05, 1.0), SeedSpec(1))
    with pytest.raises(ValueError):
        simulate_current(p, 0.0, g, path=other)


def test_circuit_params_validation():
    with pytest.raises(ValueError):
        CircuitParams(L=0.0, R=1.0, V=1.0)
    with pytest.raises(ValueError):
        CircuitParams(L=1.0, R=1.0, V=-1.0)
    assert CircuitParams(1.0, 2.0, 2.0).stationary_energy == pytest.approx(0.5)


def test_wiener_from_values_roundtrip():
    g = TimeGrid.from_horizon(0.25, 1.0)
    w = WienerPath.from_values(g, [0.0, 0.1, -0.2, 0.3, 0.0])
    assert np.allclose(w.increments, [0.1, -0.3, 0.5, -0.3])
    with pytest.raises(ValueError):
        WienerPath.from_values(g, [1.0, 0.1, -0.2, 0.3, 0.0])
