import math

import numpy as np
import pytest

from slowfol.errors import ConfigError, ContractionError, HypothesisError, NotOnFiberError
from slowfol.examples import fhn_like_system, oracle_motivating_fiber
from slowfol.lp import (WeightedNormConfig, check_on_fiber, fiber_membership_residual,
                        fiber_table, lipschitz_bound, lp_contract, lp_critical_fiber, lp_fiber,
                        lp_fiber_scaled, lp_first_order, lp_manifold, make_setting,
                        prepare_fiber, solve_order1_systems)
from slowfol.noise import sample_noise
from slowfol.sysspec import build_system, rho

ZETAS = (-2.0, -0.5, 1.0, 2.0)


def _affine_map(slope, shift):
    return lambda s: (s[0], slope * s[1] + shift)


def _quadratic_linear(c=0.1, q=0.5):
    """g = c y + q x^2: the fiber is Y0 + q (zeta^2 - X0^2) / ((1 - c) + 2 eps)."""
    return build_system({
        "slow_eigenvalues": [1.0], "fast_eigenvalues": [-1.0], "sigma2": 1.0,
        "g": {"kind": "user-composite", "box_radius": 0.125, "terms": [
            {"kind": "linear", "coeff": c, "arg": "y"},
            {"kind": "quadratic-slow", "coeff": q, "arg": "x"}]}})


def _linear_x(c=0.2):
    """g = c x: the fiber is Y0 + c (zeta - X0) / (1 + eps)."""
    return build_system({"slow_eigenvalues": [1.0], "fast_eigenvalues": [-1.0], "sigma2": 1.0,
                         "g": {"kind": "linear", "coeff": c, "arg": "x"}})


def test_default_horizon():
    cfg = WeightedNormConfig(beta=0.5, T=28.0)
    assert cfg.beta * cfg.T >= math.log(1e6)
    with pytest.raises(ConfigError, match="too short"):
        WeightedNormConfig(beta=0.5, T=20.0)


def test_for_spec_horizon(fhn):
    assert WeightedNormConfig.for_spec(fhn, dt=1e-3).T == pytest.approx(28.0)


def test_lp_contract_affine():
    times = np.linspace(-10, 0, 101)
    cfg = WeightedNormConfig(beta=0.5, T=28.0, tol=1e-12)
    init = (np.zeros((101, 0)), np.zeros((101, 1)))
    res = lp_contract(_affine_map(0.5, 1.0), init, cfg, times, rho_value=0.5)
    assert res.value_at_zero[0] == pytest.approx(2.0, abs=1e-11)
    assert all(r <= 0.5 + 1e-9 for r in res.ratios)
    assert res.contraction_ok()


def test_lp_contract_diverges_for_expansive_map():
    times = np.linspace(-10, 0, 101)
    cfg = WeightedNormConfig(beta=0.5, T=28.0, max_iters=100)
    init = (np.zeros((101, 0)), np.zeros((101, 1)))
    with pytest.raises(ContractionError) as info:
        lp_contract(_affine_map(1.2, 1.0), init, cfg, times)
    res = info.value.residuals
    assert len(res) == 100
    # the relative residual stalls near (1.2 - 1) / 1.2 instead of decaying
    assert res[-1] == pytest.approx(0.2 / 1.2, rel=1e-3)


def test_guard_refuses_rho_above_one():
    spec = build_system({"slow_eigenvalues": [1.0], "fast_eigenvalues": [-1.0],
                         "g": {"kind": "scaled-sine", "coeff": 0.4, "arg": "x"}})
    assert rho(spec, 0.1) > 1.0
    cfg = WeightedNormConfig.for_spec(spec, dt=1e-2)
    nz = sample_noise(spec, 0, -cfg.T, 0.0, cfg.dt, eps=0.1)
    with pytest.raises(HypothesisError):
        lp_fiber(spec, 0.1, nz, ([1.0], [0.0]), [2.0], cfg)


def test_motivating_fiber_values(motivating, mcfg, mnoise):
    for z in ZETAS:
        l, res = lp_fiber(motivating, 0.1, mnoise, ([1.0], [0.0]), [z], mcfg)
        assert l[0] == pytest.approx(oracle_motivating_fiber(0.1, z, 1.0, 0.0), abs=1e-5)
        assert res.contraction_ok(0.1)


def test_manifold_and_critical(motivating, mcfg, mnoise):
    h, _ = lp_manifold(motivating, 0.1, mnoise, [2.0], mcfg)
    assert h[0] == pytest.approx(4.0 / 1.2, abs=1e-5)
    l0, _ = lp_critical_fiber(motivating, mnoise, ([1.0], [0.5]), [2.0], mcfg)
    assert l0[0] == pytest.approx(0.5 + 3.0, abs=1e-6)


def test_quadratic_with_linear_y_closed_form(mcfg):
    spec = _quadratic_linear()
    c, q, x0, y0 = 0.1, 0.5, 1.0, 0.3
    cfg = WeightedNormConfig.for_spec(spec, dt=1e-3)
    for eps in (0.2, 0.05):
        nz = sample_noise(spec, 5, -cfg.T, 0.0, cfg.dt, eps=eps)
        for z in (-1.5, 2.0):
            l, _ = lp_fiber(spec, eps, nz, ([x0], [y0]), [z], cfg)
            assert l[0] == pytest.approx(y0 + q * (z * z - x0 * x0) / ((1 - c) + 2 * eps), abs=1e-5)
    nz = sample_noise(spec, 5, -cfg.T, 0.0, cfg.dt)
    for z in (-1.5, 2.0):
        l0, _ = lp_critical_fiber(spec, nz, ([x0], [y0]), [z], cfg)
        assert l0[0] == pytest.approx(y0 + q * (z * z - x0 * x0) / (1 - c), abs=1e-6)
        l1 = lp_first_order(spec, nz, ([x0], [y0]), [z], cfg)
        assert l1[0] == pytest.approx(-2 * q * (z * z - x0 * x0) / (1 - c) ** 2, abs=1e-5)


def test_linear_x_closed_form():
    spec = _linear_x()
    c, x0, y0 = 0.2, 0.5, -0.1
    cfg = WeightedNormConfig.for_spec(spec, dt=1e-3)
    nz = sample_noise(spec, 2, -cfg.T, 0.0, cfg.dt, eps=0.1)
    l, _ = lp_fiber(spec, 0.1, nz, ([x0], [y0]), [2.0], cfg)
    assert l[0] == pytest.approx(y0 + c * 1.5 / 1.1, abs=1e-6)
    l1 = lp_first_order(spec, nz, ([x0], [y0]), [2.0], cfg)
    assert l1[0] == pytest.approx(-c * 1.5, abs=1e-6)


def test_first_order_matches_finite_difference():
    """l1 equals the central difference of the rescaled fiber in eps.

    Slow noise is switched off: delta(eps t) is not differentiable in eps.
    """
    fhn = fhn_like_system(sigma1=0.0)
    cfg = WeightedNormConfig.for_spec(fhn, dt=1e-2, tol=1e-12)
    h = 1e-3
    nz = sample_noise(fhn, 11, -cfg.T, 0.0, cfg.dt, delta_dt=h * cfg.dt,
                      delta_window=(-h * cfg.T, h * cfg.T))
    base = (np.array([1.0, 0.0, 0.0]), np.zeros(3))
    zeta = np.array([2.0, -0.5, 0.3])
    lp, _ = lp_fiber_scaled(fhn, h, nz, base, zeta, cfg, guard=False)
    lm, _ = lp_fiber_scaled(fhn, -h, nz, base, zeta, cfg, guard=False)
    fd = (lp - lm) / (2 * h)
    l1 = lp_first_order(fhn, nz, base, zeta, cfg)
    assert np.max(np.abs(fd - l1)) < 1e-4 * max(1.0, np.max(np.abs(l1)))
    assert np.max(np.abs(l1)) > 1e-3


def test_first_order_two_forms_agree(fhn, fcfg):
    nz = sample_noise(fhn, 11, -fcfg.T, 0.0, fcfg.dt)
    base = (np.array([1.0, 0.0, 0.0]), np.zeros(3))
    zeta = np.array([2.0, -0.5, 0.3])
    sol = solve_order1_systems(fhn, nz, base, zeta, fcfg)
    # tempered V1 at 0 and the product-quadrature integral are the same number
    assert np.allclose(sol.l1, lp_first_order(fhn, nz, base, zeta, fcfg, solution=sol),
                       atol=1e-8)


def test_fhn_contraction_ratios(fhn, fcfg, fnoise):
    base = (np.array([1.0, 0.0, 0.0]), np.zeros(3))
    t = fiber_table(fhn, 0.1, fnoise, base, [[3.0, 0, 0], [-2.0, 0.5, 0], [1.0, 0, 0]], fcfg)
    for z, d in zip(t.zeta_grid, t.diagnostics):
        assert d["iterations"] >= (1 if z[0] == 1.0 else 2)
        assert all(r <= d["rho"] + 0.1 for r in d["ratios"])
    assert fiber_membership_residual(t) < 1e-12


def test_fiber_table_csv(motivating, mcfg, mnoise, tmp_path):
    t = fiber_table(motivating, 0.1, mnoise, ([1.0], [0.0]), [[-1.0], [1.0]], mcfg)
    p = tmp_path / "f.csv"
    with open(p, "w") as fh:
        t.to_csv(fh)
    lines = p.read_text().splitlines()
    assert lines[0] == "zeta_0,l_0,iterations,residual"
    assert len(lines) == 3


def test_check_on_fiber(motivating, mcfg, mnoise):
    ctx = prepare_fiber(make_setting(motivating, "random", 0.1, mnoise, mcfg), ([1.0], [0.0]),
                        mcfg)
    on = oracle_motivating_fiber(0.1, 2.0, 1.0, 0.0)
    assert check_on_fiber(ctx, ([2.0], [on]), mcfg, 1e-5) < 1e-5
    with pytest.raises(NotOnFiberError):
        check_on_fiber(ctx, ([2.0], [on + 0.1]), mcfg, 1e-5)


def test_lipschitz_bounds(fhn):
    assert lipschitz_bound(fhn, "critical", 0.0) == pytest.approx(0.25 / 1.25)
    r = rho(fhn, 0.1)
    assert lipschitz_bound(fhn, "random", 0.1) == pytest.approx(0.25 / 1.05 / (1 - r))


def test_zeta_shape_checked(motivating, mcfg, mnoise):
    with pytest.raises(ConfigError):
        lp_fiber(motivating, 0.1, mnoise, ([1.0], [0.0]), [1.0, 2.0], mcfg)
