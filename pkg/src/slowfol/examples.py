"""Built-in systems and closed-form oracles.

The scalar quadratic example

    dx = x dt,    dy = (-y + x^2)/eps dt + dW2/sqrt(eps)

has closed-form fibers and manifolds. The reaction-diffusion
system is a sine-Galerkin truncation on (0, pi) with ``A = Id``,
``B`` the Dirichlet Laplacian, ``f = sin(y)/4`` and ``g = cos(x)/4``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sysspec import SystemSpec, build_system

#: Box on which the quadratic term is declared Lipschitz with K = 2 R = 1/4.
MOTIVATING_BOX_RADIUS = 0.125


def motivating_system(box_radius: float = MOTIVATING_BOX_RADIUS, sigma2: float = 1.0) -> SystemSpec:
    """Scalar system with slow rate 1, fast rate -1, ``f = 0``, ``g = x^2``.

    ``g`` is only locally Lipschitz; its declared constant ``2 R`` holds on
    the box of radius ``box_radius``.
    """
    return build_system({
        "name": "motivating",
        "slow_eigenvalues": [1.0],
        "fast_eigenvalues": [-1.0],
        "f": "zero",
        "g": {"kind": "quadratic-slow", "coeff": 1.0, "arg": "x", "box_radius": box_radius},
        "sigma1": 0.0,
        "sigma2": sigma2,
    })


def fhn_like_system(n_slow_modes: int = 3, n_fast_modes: int = 3, n_grid: int = 0,
                    sigma1: float = 1.0, sigma2: float = 1.0) -> SystemSpec:
    """Sine-Galerkin reaction-diffusion system with ``K = 1/4``.

    Slow eigenvalues are all 1, fast eigenvalues ``-k^2`` for
    ``k = 1..n_fast_modes``. ``f = sin(y)/4`` is bounded; ``g`` is
    ``(cos(x) - 1)/4`` so that it vanishes at the origin.
    """
    if n_slow_modes < 1 or n_fast_modes < 1:
        raise ValueError("mode counts must be at least 1")
    return build_system({
        "name": "fhn",
        "slow_eigenvalues": [1.0] * n_slow_modes,
        "fast_eigenvalues": [-float(k * k) for k in range(1, n_fast_modes + 1)],
        "f": {"kind": "scaled-sine", "coeff": 0.25, "arg": "y"},
        "g": {"kind": "scaled-cosine", "coeff": 0.25, "arg": "x"},
        "sigma1": sigma1,
        "sigma2": sigma2,
        "basis": "sine",
        "n_grid": n_grid,
    })


BUILTIN_SYSTEMS: dict[str, Callable[..., SystemSpec]] = {
    "motivating": motivating_system,
    "fhn": fhn_like_system,
}


# ----------------------------------------------------------------- oracles

def oracle_motivating_fiber(eps, zeta, x0, y0):
    """``l = Y0 + (zeta^2 - X0^2) / (1 + 2 eps)``."""
    return y0 + (np.square(zeta) - np.square(x0)) / (1.0 + 2.0 * eps)


def oracle_motivating_manifold(eps, zeta):
    """``h = zeta^2 / (1 + 2 eps)``."""
    return np.square(zeta) / (1.0 + 2.0 * eps)


def oracle_motivating_critical(zeta, x0, y0):
    """``l0 = Y0 + zeta^2 - X0^2``."""
    return y0 + np.square(zeta) - np.square(x0)


def oracle_motivating_first_order(zeta, x0):
    """Coefficient of eps in the fiber expansion, ``-2 (zeta^2 - X0^2)``."""
    return -2.0 * (np.square(zeta) - np.square(x0))


def oracle_motivating_order_residual(eps, zeta, x0):
    """Exact ``|l - (l0 + eps l1)| = 4 eps^2 |zeta^2 - X0^2| / (1 + 2 eps)``."""
    return 4.0 * eps ** 2 * np.abs(np.square(zeta) - np.square(x0)) / (1.0 + 2.0 * eps)


def oracle_motivating_convergence(eps, zeta, x0):
    """Exact ``|l - l0| = 2 eps |zeta^2 - X0^2| / (1 + 2 eps)``."""
    return 2.0 * eps * np.abs(np.square(zeta) - np.square(x0)) / (1.0 + 2.0 * eps)


def oracle_motivating_forward(t, eps, x0, y0):
    """Noise-free fast state ``Y(t)`` of the random system started at ``(x0, y0)``."""
    t = np.asarray(t, dtype=float)
    decay = np.exp(-t / eps)
    return y0 * decay + x0 ** 2 * (np.exp(2.0 * t) - decay) / (1.0 + 2.0 * eps)


def oracle_motivating_critical_forward(t, x0, y0):
    """Critical fast state ``Y0(t) = e^{-t} y0 + x0^2 (1 - e^{-t})``."""
    t = np.asarray(t, dtype=float)
    return np.exp(-t) * y0 + x0 ** 2 * (1.0 - np.exp(-t))


@dataclass(frozen=True)
class OracleSet:
    """Closed-form evaluators for the quadratic example."""

    fiber_fn: Callable
    manifold_fn: Callable
    critical_fn: Callable
    first_order_fn: Callable
    validity_box: tuple[float, float]

    def check_finite(self, n: int = 101) -> bool:
        rs, rf = self.validity_box
        z = np.linspace(-rs, rs, n)
        vals = [self.fiber_fn(0.1, z, 1.0, 0.0), self.manifold_fn(0.1, z),
                self.critical_fn(z, 1.0, 0.0), self.first_order_fn(z, 1.0)]
        return all(np.all(np.isfinite(v)) for v in vals)


MOTIVATING_ORACLES = OracleSet(
    fiber_fn=oracle_motivating_fiber,
    manifold_fn=oracle_motivating_manifold,
    critical_fn=oracle_motivating_critical,
    first_order_fn=oracle_motivating_first_order,
    validity_box=(1e3, 1e6),
)
