"""Property-based checks of metric and cocycle invariants."""
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import wasserstein_distance

from slowfol.analysis import wasserstein1
from slowfol.dynamics import phi_functions
from slowfol.examples import (oracle_motivating_critical, oracle_motivating_fiber,
                              oracle_motivating_manifold)
from slowfol.noise import TimeGrid, replica_seed, sample_wiener, shift_path
from slowfol.sysspec import gap_bound, rho_value

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
samples = arrays(np.float64, st.integers(1, 40), elements=finite)
rates = st.floats(0.05, 20.0)


@given(samples, samples)
def test_w1_symmetric_and_matches_scipy(a, b):
    d = wasserstein1(a, b)
    assert d >= 0
    assert math.isclose(d, wasserstein1(b, a), rel_tol=1e-12, abs_tol=1e-9)
    assert math.isclose(d, wasserstein_distance(a, b), rel_tol=1e-9, abs_tol=1e-9)


@given(samples)
def test_w1_identity(a):
    assert wasserstein1(a, a) == 0.0


@given(samples, samples, samples)
def test_w1_triangle(a, b, c):
    assert wasserstein1(a, c) <= wasserstein1(a, b) + wasserstein1(b, c) + 1e-8


@given(samples, st.floats(-100, 100))
def test_w1_translation(a, c):
    assert math.isclose(wasserstein1(a + c, a), abs(c), rel_tol=1e-9, abs_tol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.integers(-50, 50), st.integers(-50, 50))
def test_wiener_shift_cocycle(seed, k1, k2):
    g = TimeGrid.from_bounds(-2.0, 2.0, 0.01)
    w = sample_wiener(seed, g, 1)
    t1, t2 = k1 * 0.01, k2 * 0.01
    twice = shift_path(shift_path(w, t1), t2)
    once = shift_path(w, t1 + t2)
    s = np.array([-0.5, 0.0, 0.5])
    assert np.allclose(twice.at(s), once.at(s), atol=1e-12)


@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 2 ** 20), st.integers(0, 2 ** 20))
def test_replica_seed_injective(base, i, j):
    if i != j:
        assert replica_seed(base, i) != replica_seed(base, j)
    assert 0 <= replica_seed(base, i) < 2 ** 64


@given(rates, rates, st.floats(0.0, 0.3), st.floats(1e-4, 10.0), st.floats(1e-4, 10.0))
def test_rho_decreasing_in_eps(gs, gf, k, e1, e2):
    lo, hi = sorted((e1, e2))
    assert rho_value(k, -gs, gf, hi) <= rho_value(k, -gs, gf, lo) + 1e-15


@given(rates, rates)
def test_gap_bound_is_rho_limit_threshold(gs, gf):
    gb = gap_bound(-gs, gf)
    assert 0 < gb < min(gs, gf)
    # rho(0+) = K / gap_bound
    assert math.isclose(rho_value(gb, -gs, gf, 0.0), 1.0, rel_tol=1e-12)


@given(st.floats(-1.0, 1.0))
def test_phi_recurrence(z):
    p1, p2 = phi_functions(z)
    assert math.isclose(float(p1), 1.0 + z * float(p2), rel_tol=1e-12, abs_tol=1e-14)


@given(st.floats(0.001, 2.0), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_oracle_parallelism(eps, zeta, x0, y0):
    l = oracle_motivating_fiber(eps, zeta, x0, y0)
    h = oracle_motivating_manifold(eps, zeta)
    assert math.isclose(l - h, y0 - oracle_motivating_manifold(eps, x0), abs_tol=1e-9)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_oracle_critical_is_eps_limit(zeta, x0, y0):
    assert math.isclose(oracle_motivating_fiber(1e-12, zeta, x0, y0),
                        oracle_motivating_critical(zeta, x0, y0), abs_tol=1e-9)
