import math

import numpy as np
import pytest

from slowfol.dynamics import (ExpConv, guard_finite, integrate_base_backward, integrate_critical,
                              integrate_difference, integrate_forward, integrate_scaled,
                              make_frame, phi_functions)
from slowfol.errors import ConfigError, NumericalError
from slowfol.examples import (fhn_like_system, motivating_system, oracle_motivating_critical_forward,
                              oracle_motivating_forward)
from slowfol.noise import sample_noise


@pytest.fixture(scope="module")
def quiet():
    """Quadratic example without noise."""
    return motivating_system(sigma2=0.0)


def test_phi_functions_small_and_large_agree():
    z = np.array([-2e-3, -1.0001e-3, -0.9999e-3, 0.9999e-3, 1.0001e-3])
    p1, p2 = phi_functions(z)
    assert np.allclose(p1, np.expm1(z) / z, rtol=1e-12)
    assert np.allclose(p2, (np.expm1(z) - z) / z ** 2, rtol=1e-7)
    assert phi_functions(0.0)[0] == 1.0
    assert phi_functions(0.0)[1] == 0.5


def test_expconv_backward_exact_for_constant_forcing():
    dt, lam, c, y_end = 0.01, np.array([-3.0, 0.0, 2.0]), 0.7, np.array([1.0, -1.0, 0.5])
    t = -np.arange(500)[::-1] * dt
    conv = ExpConv(lam, 2.0, dt)
    y = conv.backward(np.full((t.size, 3), c), y_end)
    expected = np.empty_like(y)
    for m, l in enumerate(lam):
        integral = t if l == 0 else np.expm1(l * t) / l
        expected[:, m] = np.exp(l * t) * y_end[m] + 2.0 * c * integral
    assert np.allclose(y, expected, rtol=1e-12, atol=1e-12)


def test_expconv_tempered_constant_forcing():
    conv = ExpConv(np.array([-0.5, -4.0]), 3.0, 0.01)
    y = conv.tempered(np.ones((200, 2)))
    assert np.allclose(y, -3.0 / np.array([-0.5, -4.0]), rtol=1e-12)


def test_expconv_weighted_integral_matches_backward():
    rng = np.random.default_rng(0)
    dt = 0.01
    t = -np.arange(300)[::-1] * dt
    phi = rng.normal(size=(300, 2))
    conv = ExpConv(np.array([-1.0, -2.0]), 1.0, dt)
    # int_{t0}^0 e^{-lam s} phi ds equals -(backward solution at t0) * e^{-lam t0}
    y = conv.backward(phi, 0.0)
    assert np.allclose(conv.weighted_integral(phi, t), -y[0] * np.exp(-conv.rates * t[0]))


def test_forward_matches_oracle_second_order(quiet):
    nz = sample_noise(quiet, 0, -1.0, 1.0, 1e-3, eps=0.1)
    errs = []
    for dt in (0.02, 0.01):
        tr = integrate_forward(quiet, 0.1, nz, [0.5], [0.2], 1.0, dt)
        errs.append(np.max(np.abs(tr.fast_states[:, 0]
                                  - oracle_motivating_forward(tr.times, 0.1, 0.5, 0.2))))
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)


def test_critical_forward_matches_oracle(quiet):
    nz = sample_noise(quiet, 0, -1.0, 2.0, 1e-3)
    tr = integrate_critical(quiet, nz, [1.5], [0.0], 2.0, 1e-3)
    assert np.allclose(tr.slow_states, 1.5)
    assert np.allclose(tr.fast_states[:, 0],
                       oracle_motivating_critical_forward(tr.times, 1.5, 0.0), atol=1e-12)


def test_scaled_is_time_rescaled_random():
    # xi(t) and eta(eps t) agree only in law, so drop the fast noise
    fhn = fhn_like_system(sigma2=0.0)
    eps, dt = 0.1, 0.01
    nz = sample_noise(fhn, 3, -1.0, 1.0, eps * dt, eps=eps, delta_dt=eps * dt)
    x0, y0 = np.array([0.3, -0.2, 0.1]), np.array([0.1, 0.0, -0.1])
    a = integrate_scaled(fhn, eps, nz, x0, y0, 1.0, dt)
    b = integrate_forward(fhn, eps, nz, x0, y0, eps * 1.0, eps * dt)
    assert np.allclose(a.slow_states[-1], b.slow_states[-1], atol=1e-12)
    assert np.allclose(a.fast_states[-1], b.fast_states[-1], atol=1e-12)


def test_scaled_eps_zero_is_critical(fhn):
    nz = sample_noise(fhn, 3, -5.0, 1.0, 0.01)
    x0, y0 = np.array([0.3, -0.2, 0.1]), np.zeros(3)
    a = integrate_scaled(fhn, 0.0, nz, x0, y0, 1.0, 0.01)
    b = integrate_critical(fhn, nz, x0, y0, 1.0, 0.01)
    assert np.array_equal(a.fast_states, b.fast_states)
    assert a.system_tag == b.system_tag == "critical"


def test_base_backward_reports_discrepancy(quiet):
    nz = sample_noise(quiet, 0, -28.0, 0.0, 1e-3, eps=0.1)
    tr = integrate_base_backward(quiet, 0.1, nz, [1.0], [0.0], 28.0, 1e-3)
    # the tempered fast state at 0 is the manifold value 1 / (1 + 2 eps)
    assert tr.fast_states[-1, 0] == pytest.approx(1.0 / 1.2, abs=1e-6)
    assert tr.meta["y0_discrepancy"] == pytest.approx(1.0 / 1.2, abs=1e-6)
    assert np.allclose(tr.slow_states[:, 0], np.exp(tr.times), rtol=1e-9)


def test_difference_pass_shapes(quiet):
    nz = sample_noise(quiet, 0, -28.0, 0.0, 1e-3, eps=0.1)
    base = integrate_base_backward(quiet, 0.1, nz, [1.0], [0.0], 28.0, 1e-3)
    d = integrate_difference(quiet, 0.1, nz, base, [1.0])
    assert d.slow_states.shape == base.slow_states.shape
    assert d.system_tag == "difference_eps"
    # slow difference of the linear flow is exact
    assert np.allclose(d.slow_states[:, 0], np.exp(base.times))


def test_make_frame_validation(fhn):
    with pytest.raises(ConfigError):
        make_frame(fhn, "random", 0.0)
    with pytest.raises(ConfigError):
        make_frame(fhn, "sideways", 0.1)
    fr = make_frame(fhn, "scaled", -0.01)
    assert fr.weight == pytest.approx(-0.01 * fhn.beta)


def test_guard_finite():
    guard_finite(np.ones(3))
    with pytest.raises(NumericalError):
        guard_finite(np.array([1.0, math.inf]))
    with pytest.raises(NumericalError):
        guard_finite(np.array([1e13]))


def test_forward_rejects_bad_horizon(fhn):
    nz = sample_noise(fhn, 3, -1.0, 1.0, 0.01, eps=0.1)
    with pytest.raises(ConfigError):
        integrate_forward(fhn, 0.1, nz, np.zeros(3), np.zeros(3), 0.0, 0.01)


def test_trajectory_csv(quiet, tmp_path):
    nz = sample_noise(quiet, 0, -1.0, 1.0, 0.01, eps=0.1)
    tr = integrate_forward(quiet, 0.1, nz, [0.5], [0.2], 0.05, 0.01)
    p = tmp_path / "tr.csv"
    with open(p, "w") as fh:
        tr.to_csv(fh)
    lines = p.read_text().splitlines()
    assert lines[0].split(",")[0] == "t"
    assert len(lines) == 7
