"""Exponential product integration for the slow-fast system and its rescaled limits.

Every stiff integral ``int e^{lam (t - s)} phi(s) ds`` is evaluated with the
linear part exact and ``phi`` piecewise linear between grid samples. Over a
step from ``S`` to ``E`` (``h = E - S`` may be negative), with ``z = lam h``,

    int_S^E e^{lam (E - s)} phi(s) ds = h [(phi1(z) - phi2(z)) phi_S + phi2(z) phi_E],

where ``phi1 = (e^z - 1)/z`` and ``phi2 = (e^z - 1 - z)/z^2``. The resulting
first-order linear recursions are run with ``scipy.signal.lfilter``.

Three frames share this machinery:

``random``
    original time; slow rates ``a``, fast rates ``b/eps`` with factor
    ``1/eps``; noise ``delta(t)``, ``eta(t)``.
``scaled``
    fast time ``t/eps``; slow rates ``eps a`` with factor ``eps``, fast
    rates ``b``; noise ``delta(eps t)``, ``xi(t)``.
``critical``
    the scaled frame at ``eps = 0``: the slow state is frozen and the noise
    is ``delta(0)``, ``xi(t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, GridError, NumericalError
from .noise import NoisePaths, TimeGrid
from .sysspec import SystemSpec

OVERFLOW_BOUND = 1e12
SYSTEM_TAGS = ("random_eps", "difference_eps", "scaled_eps", "critical", "first_order")


# ----------------------------------------------------------------- kernels

def phi_functions(z):
    """Return ``(phi1(z), phi2(z))``, using a Taylor series near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 0.0, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        em1 = np.expm1(zs)
        p1 = np.where(small, 0.0, em1 / zs)
        p2 = np.where(small, 0.0, (em1 - zs) / (zs * zs))
    t = np.where(small, z, 0.0)
    p1 = np.where(small, 1 + t * (1 / 2 + t * (1 / 6 + t * (1 / 24 + t / 120))), p1)
    p2 = np.where(small, 1 / 2 + t * (1 / 6 + t * (1 / 24 + t * (1 / 120 + t / 720))), p2)
    return p1, p2


@dataclass(frozen=True)
class ExpConv:
    """Per-mode exponential convolution on a uniform grid.

    Parameters
    ----------
    rates : array
        Linear rates ``lam_k``.
    scale : float
        Factor multiplying the forcing.
    dt : float
        Grid step.
    """

    rates: np.ndarray
    scale: float
    dt: float
    _coef: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.rates, dtype=float))
        object.__setattr__(self, "rates", lam)
        coef = {}
        for direction, h in (("fwd", self.dt), ("bwd", -self.dt)):
            p1, p2 = phi_functions(lam * h)
            coef[direction] = (np.exp(lam * h), self.scale * h * (p1 - p2),
                               self.scale * h * p2, self.scale * h * p1)
        object.__setattr__(self, "_coef", coef)

    def tempered(self, phi: np.ndarray) -> np.ndarray:
        """``scale * int_{-inf}^{t_j} e^{lam (t_j - s)} phi(s) ds`` for ``lam < 0``.

        The history before the first sample is taken quasi-static,
        ``phi(s) = phi(t_0)``.
        """
        c, ws, we, _ = self._coef["fwd"]
        out = np.empty_like(phi)
        for m, lam in enumerate(self.rates):
            u = np.empty(phi.shape[0])
            u[0] = -self.scale * phi[0, m] / lam if lam != 0 else 0.0
            u[1:] = ws[m] * phi[:-1, m] + we[m] * phi[1:, m]
            out[:, m] = lfilter([1.0], [1.0, -c[m]], u)
        return out

    def backward(self, phi: np.ndarray, y_end) -> np.ndarray:
        """``y(t_j) = e^{lam t_j} y_end + scale int_0^{t_j} e^{lam (t_j - s)} phi ds``.

        The last grid point is ``t = 0``; the recursion runs toward ``t_0``.
        """
        c, ws, we, _ = self._coef["bwd"]
        y_end = np.broadcast_to(np.asarray(y_end, dtype=float), (phi.shape[1],))
        out = np.empty_like(phi)
        rev = phi[::-1]
        for m in range(phi.shape[1]):
            u = np.empty(phi.shape[0])
            u[0] = y_end[m]
            u[1:] = ws[m] * rev[:-1, m] + we[m] * rev[1:, m]
            out[:, m] = lfilter([1.0], [1.0, -c[m]], u)[::-1]
        return out

    def forward(self, phi: np.ndarray, y0) -> np.ndarray:
        """Forward initial-value convolution from ``y(t_0) = y0``."""
        c, ws, we, _ = self._coef["fwd"]
        y0 = np.broadcast_to(np.asarray(y0, dtype=float), (phi.shape[1],))
        out = np.empty_like(phi)
        for m in range(phi.shape[1]):
            u = np.empty(phi.shape[0])
            u[0] = y0[m]
            u[1:] = ws[m] * phi[:-1, m] + we[m] * phi[1:, m]
            out[:, m] = lfilter([1.0], [1.0, -c[m]], u)
        return out

    def weighted_integral(self, phi: np.ndarray, times: np.ndarray) -> np.ndarray:
        """``scale * int_{t_0}^{0} e^{-lam s} phi(s) ds`` on a grid ending at 0."""
        _, ws, we, _ = self._coef["fwd"]
        decay = np.exp(-np.outer(times[1:], self.rates))
        inc = ws * phi[:-1] + we * phi[1:]
        return np.sum(decay * inc, axis=0)

    def etd_coefficients(self):
        """``(e^{lam dt}, scale dt phi1, scale dt phi2)`` for a forward step."""
        c, _, we, w1 = self._coef["fwd"]
        return c, w1, we


# ------------------------------------------------------------------ frames

@dataclass(frozen=True)
class Frame:
    """Linear rates and forcing factors of one time frame, with its norm weight."""

    kind: str
    eps: float
    slow_rates: np.ndarray
    slow_scale: float
    fast_rates: np.ndarray
    fast_scale: float
    weight: float

    @property
    def slow_tag(self) -> str:
        return {"random": "random_eps", "scaled": "scaled_eps", "critical": "critical"}[self.kind]


def make_frame(spec: SystemSpec, kind: str, eps: float = 0.0) -> Frame:
    """Build the ``random``, ``scaled`` or ``critical`` frame.

    ``scaled`` accepts any real ``eps`` (negative values serve
    finite-difference checks); ``random`` requires ``eps > 0``.
    """
    beta = spec.beta
    if kind == "random":
        if not eps > 0:
            raise ConfigError(f"eps must be positive, got {eps}")
        return Frame(kind, eps, spec.a.copy(), 1.0, spec.b / eps, 1.0 / eps, beta)
    if kind == "scaled":
        return Frame(kind, eps, eps * spec.a, eps, spec.b.copy(), 1.0, eps * beta)
    if kind == "critical":
        return Frame(kind, 0.0, np.zeros(spec.n_slow), 0.0, spec.b.copy(), 1.0, beta)
    raise ConfigError(f"unknown frame {kind!r}")


def frame_noise(frame: Frame, noise: NoisePaths, times: np.ndarray):
    """Noise samples ``(slow, fast)`` seen by ``frame`` at ``times``."""
    if frame.kind == "random":
        if noise.eta is None:
            raise ConfigError("random frame needs the eta path")
        if noise.eta.eps is not None and not math.isclose(noise.eta.eps, frame.eps, rel_tol=1e-12):
            raise ConfigError(f"eta was sampled for eps = {noise.eta.eps}, not {frame.eps}")
        return noise.delta.at(times), noise.eta.at(times)
    if frame.kind == "scaled":
        return noise.delta.at(frame.eps * times), noise.xi.at(times)
    d0 = noise.delta.at(0.0)
    return np.broadcast_to(d0, (len(times), d0.shape[0])), noise.xi.at(times)


# -------------------------------------------------------------- trajectory

@dataclass(frozen=True)
class Trajectory:
    """Time grid with slow and fast state arrays."""

    grid: TimeGrid
    slow_states: np.ndarray
    fast_states: np.ndarray
    system_tag: str
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def at(self, t):
        i = self.grid.index_of(t)
        return self.slow_states[i], self.fast_states[i]

    def to_csv(self, fh) -> None:
        ns, nf = self.slow_states.shape[1], self.fast_states.shape[1]
        header = ",".join(["t"] + [f"slow_{k}" for k in range(ns)] + [f"fast_{k}" for k in range(nf)])
        data = np.column_stack([self.times, self.slow_states, self.fast_states])
        np.savetxt(fh, data, delimiter=",", header=header, comments="", fmt="%.17g")


def guard_finite(*arrays: np.ndarray, bound: float = OVERFLOW_BOUND, what: str = "state") -> None:
    """Raise :class:`NumericalError` on non-finite or overflowing entries."""
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite {what} encountered")
        m = float(np.max(np.abs(arr))) if arr.size else 0.0
        if m > bound:
            raise NumericalError(f"{what} magnitude {m:.3g} exceeds overflow bound {bound:.3g}")


# ---------------------------------------------------------------- settings

class Setting:
    """A system in one frame on a backward window ``[-T, 0]``.

    Holds the sampled noise and the convolution kernels so that repeated
    integral-operator passes (Picard iterations) do no redundant work.
    """

    def __init__(self, spec: SystemSpec, frame: Frame, noise: NoisePaths, grid: TimeGrid):
        self.spec = spec
        self.frame = frame
        self.grid = grid
        self.times = grid.times
        self.dvals, self.fvals = frame_noise(frame, noise, self.times)
        self.slow = ExpConv(frame.slow_rates, frame.slow_scale, grid.dt)
        self.fast = ExpConv(frame.fast_rates, frame.fast_scale, grid.dt)
        self.noise = noise

    @classmethod
    def backward(cls, spec, frame, noise, T: float, dt: float) -> "Setting":
        return cls(spec, frame, noise, TimeGrid.from_bounds(-T, 0.0, dt))

    # nonlinear forcing along the noise
    def Fn(self, X, Y):
        return self.spec.F(X + self.dvals, Y + self.fvals)

    def Gn(self, X, Y):
        return self.spec.G(X + self.dvals, Y + self.fvals)

    def free_slow(self, x0) -> np.ndarray:
        """``e^{lam t} x0`` on the grid."""
        x0 = np.asarray(x0, dtype=float)
        return np.exp(np.outer(self.times, self.frame.slow_rates)) * x0

    def orbit_pass(self, x0, X, Y):
        """One application of the orbit operator with ``X(0) = x0``.

        Returns the slow component by backward integration and the fast
        component as the tempered convolution.
        """
        Fv = self.Fn(X, Y)
        Gv = self.Gn(X, Y)
        return self.slow.backward(Fv, x0), self.fast.tempered(Gv)

    def difference_pass(self, Xb, Yb, Fb, Gb, u0, U, V):
        """One application of the difference-system operator around a base orbit.

        ``Fb``, ``Gb`` are the forcings along the base orbit.
        """
        dF = self.Fn(Xb + U, Yb + V) - Fb
        dG = self.Gn(Xb + U, Yb + V) - Gb
        return self.slow.backward(dF, u0), self.fast.tempered(dG)


# ------------------------------------------------------------- integrators

def _forward_etd(spec: SystemSpec, frame: Frame, noise: NoisePaths, x0, y0,
                 horizon: float, dt: float, tag: str) -> Trajectory:
    if not horizon > 0:
        raise ConfigError("forward horizon must be positive")
    grid = TimeGrid.from_bounds(0.0, horizon, dt)
    times = grid.times
    dv, fv = frame_noise(frame, noise, times)
    cs, w1s, w2s = ExpConv(frame.slow_rates, frame.slow_scale, dt).etd_coefficients()
    cf, w1f, w2f = ExpConv(frame.fast_rates, frame.fast_scale, dt).etd_coefficients()
    n = grid.n_points
    X = np.empty((n, spec.n_slow))
    Y = np.empty((n, spec.n_fast))
    X[0] = np.asarray(x0, dtype=float)
    Y[0] = np.asarray(y0, dtype=float)
    Fj = spec.F(X[0] + dv[0], Y[0] + fv[0])
    Gj = spec.G(X[0] + dv[0], Y[0] + fv[0])
    for j in range(n - 1):
        xp = cs * X[j] + w1s * Fj
        yp = cf * Y[j] + w1f * Gj
        Fp = spec.F(xp + dv[j + 1], yp + fv[j + 1])
        Gp = spec.G(xp + dv[j + 1], yp + fv[j + 1])
        X[j + 1] = xp + w2s * (Fp - Fj)
        Y[j + 1] = yp + w2f * (Gp - Gj)
        Fj = spec.F(X[j + 1] + dv[j + 1], Y[j + 1] + fv[j + 1])
        Gj = spec.G(X[j + 1] + dv[j + 1], Y[j + 1] + fv[j + 1])
    guard_finite(X, Y, what="forward state")
    return Trajectory(grid, X, Y, tag, {"frame": frame.kind, "eps": frame.eps, "dt": dt})


def integrate_forward(spec: SystemSpec, eps: float, noise: NoisePaths, x0, y0,
                      horizon: float, dt: float) -> Trajectory:
    """Solve the random slow-fast system forward on ``[0, horizon]``.

    Uses the second-order exponential Runge-Kutta scheme (exact linear
    parts, trapezoidal correction of the forcing), with ``F = f(X + delta,
    Y + eta)`` and ``G = g(X + delta, Y + eta)``.

    Raises
    ------
    NumericalError
        Non-finite or overflowing state.
    """
    return _forward_etd(spec, make_frame(spec, "random", eps), noise, x0, y0,
                        horizon, dt, "random_eps")


def _tempered_backward(spec, frame, noise, x0, y0, T, dt, tol, max_iters, tag):
    from .lp import WeightedNormConfig, solve_orbit

    setting = Setting.backward(spec, frame, noise, T, dt)
    cfg = WeightedNormConfig(spec.beta, setting.grid.n_neg * dt, dt, tol, max_iters,
                             tail_tol=min(0.5, math.exp(-spec.beta * setting.grid.n_neg * dt)))
    traj, res = solve_orbit(setting, x0, cfg, guard=False)
    traj.meta.update({"dt": dt, "T": T, "iterations": res.iterations,
                      "final_residual": res.final_residual,
                      "contraction_estimate": res.contraction_estimate})
    if y0 is not None:
        traj.meta["y0_discrepancy"] = float(np.linalg.norm(traj.fast_states[-1] - np.asarray(y0, dtype=float)))
    return Trajectory(traj.grid, traj.slow_states, traj.fast_states, tag, traj.meta)


def integrate_base_backward(spec: SystemSpec, eps: float, noise: NoisePaths, x0, y0,
                            T: float, dt: float, tol: float = 1e-10,
                            max_iters: int = 200) -> Trajectory:
    """Backward base orbit on ``[-T, 0]`` through ``x0``.

    The slow part is integrated backward from ``X(0) = x0``; the fast part
    is the tempered continuation, i.e. the fixed point of
    ``Y(t) = (1/eps) int_{-inf}^t e^{B (t-s)/eps} G ds``. Its value at 0 need
    not equal ``y0`` when g depends on y; the difference is reported in
    ``meta["y0_discrepancy"]``.
    """
    return _tempered_backward(spec, make_frame(spec, "random", eps), noise, x0, y0, T, dt,
                              tol, max_iters, "random_eps")


def integrate_difference(spec: SystemSpec, eps: float, noise: NoisePaths,
                         base_traj: Trajectory, u0, candidate=None,
                         frame: Frame | None = None) -> Trajectory:
    """One pass of the difference-system integral operator.

    Given a candidate ``(U, V)`` (default ``(e^{At} u0, 0)``) returns
    ``U = e^{At} u0 + int_0^t e^{A(t-s)} dF ds`` and
    ``V = (1/eps) int_{-inf}^t e^{B(t-s)/eps} dG ds``, with the increments
    dF, dG taken along the base orbit.
    """
    frame = frame or make_frame(spec, "random", eps)
    grid = base_traj.grid
    if grid.n_pos != 0:
        raise GridError("base orbit must end at t = 0")
    setting = Setting(spec, frame, noise, grid)
    Xb, Yb = base_traj.slow_states, base_traj.fast_states
    u0 = np.asarray(u0, dtype=float)
    if candidate is None:
        candidate = (setting.free_slow(u0), np.zeros_like(Yb))
    U, V = setting.difference_pass(Xb, Yb, setting.Fn(Xb, Yb), setting.Gn(Xb, Yb), u0, *candidate)
    guard_finite(U, V, what="difference state")
    return Trajectory(grid, U, V, "difference_eps", {"frame": frame.kind, "eps": frame.eps})


def integrate_scaled(spec: SystemSpec, eps: float, noise: NoisePaths, x0, y0,
                     horizon: float, dt: float, tol: float = 1e-10,
                     max_iters: int = 200) -> Trajectory:
    """Time-rescaled system, forward (``horizon > 0``) or tempered backward.

    ``eps = 0`` gives the critical system with identical arithmetic.
    """
    frame = make_frame(spec, "scaled", eps) if eps != 0 else make_frame(spec, "critical")
    tag = "scaled_eps" if eps != 0 else "critical"
    if horizon > 0:
        return _forward_etd(spec, frame, noise, x0, y0, horizon, dt, tag)
    return _tempered_backward(spec, frame, noise, x0, y0, -horizon, dt, tol, max_iters, tag)


def integrate_critical(spec: SystemSpec, noise: NoisePaths, x0, y0, horizon: float,
                       dt: float, tol: float = 1e-10, max_iters: int = 200) -> Trajectory:
    """Critical system: ``X = x0`` frozen, ``dY = B Y + g(x0 + delta(0), Y + xi)``."""
    return integrate_scaled(spec, 0.0, noise, x0, y0, horizon, dt, tol, max_iters)
