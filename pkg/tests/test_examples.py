import numpy as np
import pytest

from slowfol.examples import (BUILTIN_SYSTEMS, MOTIVATING_ORACLES, fhn_like_system,
                              motivating_system, oracle_motivating_convergence,
                              oracle_motivating_critical, oracle_motivating_fiber,
                              oracle_motivating_first_order, oracle_motivating_manifold,
                              oracle_motivating_order_residual)


def test_builtin_registry():
    assert set(BUILTIN_SYSTEMS) == {"motivating", "fhn"}
    assert BUILTIN_SYSTEMS["motivating"]().name == "motivating"


def test_motivating_parameters():
    spec = motivating_system()
    assert spec.a.tolist() == [1.0] and spec.b.tolist() == [-1.0]
    assert spec.sigma1 == 0.0
    assert spec.g.box_radius == 0.125
    assert not spec.g_depends_on_y()


def test_fhn_mode_counts():
    spec = fhn_like_system(2, 4)
    assert (spec.n_slow, spec.n_fast) == (2, 4)
    assert spec.n_grid == 16
    with pytest.raises(ValueError):
        fhn_like_system(0, 3)


def test_oracle_spot_values():
    assert oracle_motivating_fiber(0.5, 2.0, 1.0, 0.0) == pytest.approx(1.5)
    assert oracle_motivating_manifold(0.1, 2.0) == pytest.approx(4 / 1.2)
    assert oracle_motivating_critical(-2.0, 1.0, 0.5) == pytest.approx(3.5)
    assert oracle_motivating_first_order(2.0, 1.0) == pytest.approx(-6.0)


def test_oracles_finite():
    assert MOTIVATING_ORACLES.check_finite()


def test_fiber_at_base_point():
    assert oracle_motivating_fiber(0.3, 1.0, 1.0, 0.7) == pytest.approx(0.7)


def test_first_order_is_eps_derivative():
    h = 1e-6
    for z in (-2.0, 0.5, 3.0):
        d = (oracle_motivating_fiber(h, z, 1.0, 0.0) - oracle_motivating_fiber(-h, z, 1.0, 0.0)) / (2 * h)
        assert d == pytest.approx(oracle_motivating_first_order(z, 1.0), rel=1e-6)


def test_convergence_and_order_residual_identities():
    z = np.linspace(-3, 3, 13)
    for e in (0.2, 0.05):
        l = oracle_motivating_fiber(e, z, 1.0, 0.0)
        l0 = oracle_motivating_critical(z, 1.0, 0.0)
        l1 = oracle_motivating_first_order(z, 1.0)
        assert np.allclose(np.abs(l - l0), oracle_motivating_convergence(e, z, 1.0))
        assert np.allclose(np.abs(l - l0 - e * l1), oracle_motivating_order_residual(e, z, 1.0))
