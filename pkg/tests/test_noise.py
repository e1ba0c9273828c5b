import math

import numpy as np
import pytest

from slowfol.errors import ConfigError, GridError
from slowfol.noise import (TimeGrid, W_FAST, W_SLOW, check_eta_xi_law, ou_delta, ou_eta, ou_xi,
                           replica_seed, replica_seeds, sample_noise, sample_wiener, shift_path,
                           splitmix64, stationary_variances)


def test_splitmix64_reference_value():
    # first output of the reference generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_replica_seeds_distinct_and_reproducible():
    seeds = replica_seeds(20240601, 1000)
    assert len(set(seeds)) == 1000
    assert seeds == replica_seeds(20240601, 1000)
    assert replica_seed(5, 3) == splitmix64(5 ^ 3)


def test_time_grid_contains_zero():
    g = TimeGrid.from_bounds(-1.0, 0.5, 0.1)
    assert g.times[g.zero_index] == 0.0
    assert g.t_min == pytest.approx(-1.0)
    assert g.t_max == pytest.approx(0.5)
    assert g.index_of(0.3) == g.zero_index + 3
    with pytest.raises(GridError):
        g.index_of(0.7)


def test_wiener_reproducible_and_anchored():
    g = TimeGrid.from_bounds(-2.0, 2.0, 0.01)
    w1 = sample_wiener(11, g, 2)
    w2 = sample_wiener(11, g, 2)
    assert np.array_equal(w1.values, w2.values)
    assert np.all(w1.values[g.zero_index] == 0.0)
    other = sample_wiener(11, g, 2, stream=W_SLOW)
    assert not np.allclose(other.values, w1.values)


def test_wiener_increment_variance():
    g = TimeGrid.from_bounds(-100.0, 100.0, 0.01)
    inc = sample_wiener(1, g, 1).increments()
    assert inc.var() == pytest.approx(0.01, rel=0.03)
    assert abs(inc.mean()) < 4 * 0.1 / math.sqrt(inc.size)


def test_wiener_extension_is_consistent():
    # extending the window keeps the values on the common part
    small = sample_wiener(3, TimeGrid.from_bounds(-1.0, 1.0, 0.01), 1)
    large = sample_wiener(3, TimeGrid.from_bounds(-5.0, 5.0, 0.01), 1)
    assert np.allclose(large.at(small.grid.times), small.values)


def test_shift_path_anchors_at_tau():
    g = TimeGrid.from_bounds(-3.0, 3.0, 0.01)
    w = sample_wiener(2, g, 1)
    s = shift_path(w, 1.0)
    assert np.allclose(s.at(0.0), 0.0)
    assert np.allclose(s.at(0.5), w.at(1.5) - w.at(1.0))


def test_xi_stationary_variance_and_correlation(fhn):
    g = TimeGrid.from_bounds(0.0, 2000.0, 0.01)
    xi = ou_xi(fhn, sample_wiener(9, g, 3))
    var = stationary_variances(fhn)["xi"]
    assert np.allclose(xi.values.var(axis=0), var, rtol=0.08)
    v = xi.values[:, 0]
    lag1 = np.corrcoef(v[:-1], v[1:])[0, 1]
    assert lag1 == pytest.approx(math.exp(-1.0 * 0.01), abs=2e-3)


def test_eta_variance_independent_of_eps(fhn):
    g = TimeGrid.from_bounds(0.0, 200.0, 0.01)
    w = sample_wiener(4, g, 3)
    var = stationary_variances(fhn)["xi"]
    for eps in (0.5, 0.05):
        eta = ou_eta(fhn, eps, w)
        assert np.allclose(eta.values.var(axis=0), var, rtol=0.1)


def test_delta_stationary_variance(fhn):
    g = TimeGrid.from_bounds(-2000.0, 10.0, 0.01)
    d = ou_delta(fhn, sample_wiener(5, g, 3, W_SLOW))
    assert np.allclose(d.values.var(axis=0), stationary_variances(fhn)["delta"], rtol=0.08)


def test_delta_solves_sde_backward(fhn):
    # delta_j - e^{-a dt} delta_{j+1} is independent of the future: check the
    # one-step relation against the driving increments
    g = TimeGrid.from_bounds(-5.0, 5.0, 0.001)
    w = sample_wiener(6, g, 3, W_SLOW)
    d = ou_delta(fhn, w).values
    dw = np.diff(w.values, axis=0)
    lhs = np.diff(d, axis=0)
    rhs = fhn.a * d[:-1] * 0.001 + fhn.sigma1 * dw
    assert np.max(np.abs(lhs - rhs)) < 5e-3


def test_noise_shift_is_time_translation(fhn):
    nz = sample_noise(fhn, 8, -5.0, 2.0, 0.01, eps=0.1)
    sh = nz.shifted(1.0)
    t = np.array([-3.0, -0.5, 0.0, 1.0])
    assert np.array_equal(sh.xi.at(t), nz.xi.at(t + 1.0))
    assert np.array_equal(sh.eta.at(t), nz.eta.at(t + 1.0))
    assert np.array_equal(sh.delta.at(t), nz.delta.at(t + 1.0))


def test_sample_noise_fine_delta_grid(fhn):
    nz = sample_noise(fhn, 8, -10.0, 0.0, 0.01, delta_dt=0.001, delta_window=(-1.0, 0.0))
    assert nz.eta is None
    assert nz.delta.grid.dt == 0.001
    assert nz.delta.grid.t_min <= -1.0
    nz.delta.at(0.1 * np.linspace(-10.0, 0.0, 11))


def test_law_check_validates_inputs(fhn):
    with pytest.raises(ConfigError):
        check_eta_xi_law(fhn, 0.1, 50)
    with pytest.raises(ConfigError):
        check_eta_xi_law(fhn, -0.1, 200)


def test_law_check_report_fields(fhn):
    rep = check_eta_xi_law(fhn, 0.1, 400, seed=1)
    assert len(rep["distance"]) == 3
    assert rep["bound"][0] == pytest.approx(3 * rep["stationary_std"][0] / 20)
    # same Wiener path, different seeds per replica: distances stay moderate
    assert max(d / b for d, b in zip(rep["distance"], rep["bound"])) < 2.0


def test_ou_path_csv(fhn, tmp_path):
    g = TimeGrid.from_bounds(0.0, 0.05, 0.01)
    xi = ou_xi(fhn, sample_wiener(1, g, 3, W_FAST))
    p = tmp_path / "xi.csv"
    with open(p, "w") as fh:
        xi.to_csv(fh)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,mode_0,mode_1,mode_2"
    assert len(lines) == 7
