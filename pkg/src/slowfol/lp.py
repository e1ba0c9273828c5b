"""Lyapunov-Perron fixed points: slow manifolds and slow fibers.

All solvers discretise the backward window ``[-T, 0]`` and run Picard
iteration in the weighted sup-norm ``sup_j e^{-w t_j} |.|`` where ``w`` is
``beta = -gamma_s/2`` in the original and critical frames and ``eps beta``
in the time-rescaled frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .dynamics import (ExpConv, Frame, Setting, Trajectory, guard_finite, make_frame)
from .errors import ConfigError, ContractionError, HypothesisError, NotOnFiberError
from .noise import NoisePaths
from .sysspec import RHO_GUARD, SystemSpec, check_eps, rho, rho_critical, rho_limit

#: relative residuals below this are treated as rounding noise
RESIDUAL_FLOOR = 1e-13


@dataclass(frozen=True)
class WeightedNormConfig:
    """Discretisation and stopping rules for the Picard solvers.

    Attributes
    ----------
    beta : float
        Weight exponent ``-gamma_s/2``.
    T : float
        Truncation horizon; ``beta T >= ln(1/tail_tol)``.
    dt : float
        Grid step.
    tol : float
        Stop when the relative weighted residual drops below ``tol``.
    max_iters : int
    tail_tol : float
    slack : float
        Allowed excess of measured contraction ratios over rho.
    """

    beta: float
    T: float
    dt: float = 1e-3
    tol: float = 1e-10
    max_iters: int = 200
    tail_tol: float = 1e-6
    slack: float = 0.1

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError("beta must be positive")
        if not (self.dt > 0 and self.T > 0):
            raise ConfigError("T and dt must be positive")
        if not 0 < self.tail_tol < 1:
            raise ConfigError("tail_tol must lie in (0, 1)")
        if self.beta * self.T < math.log(1.0 / self.tail_tol) * (1 - 1e-12):
            raise ConfigError(
                f"T = {self.T} too short: beta T must be >= ln(1/tail_tol) = "
                f"{math.log(1 / self.tail_tol):.6g}")
        if self.max_iters < 1 or not self.tol > 0:
            raise ConfigError("max_iters must be >= 1 and tol > 0")

    @classmethod
    def for_spec(cls, spec: SystemSpec, dt: float = 1e-3, tail_tol: float = 1e-6,
                 tol: float = 1e-10, max_iters: int = 200, T: float | None = None,
                 slack: float = 0.1) -> "WeightedNormConfig":
        """Config with ``T = ln(1/tail_tol)/beta`` rounded up to whole time units."""
        beta = spec.beta
        if T is None:
            T = math.ceil(math.log(1.0 / tail_tol) / beta - 1e-9)
        T = math.ceil(T / dt - 1e-9) * dt
        return cls(beta, T, dt, tol, max_iters, tail_tol, slack)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "T": self.T, "dt": self.dt, "tol": self.tol,
                "max_iters": self.max_iters, "tail_tol": self.tail_tol, "slack": self.slack}


@dataclass(frozen=True)
class LPSolveResult:
    """Converged Picard solve on ``[-T, 0]``.

    Attributes
    ----------
    value_at_zero : ndarray
        Fast component at ``t = 0``.
    u_traj, v_traj : ndarray
        Slow and fast components on the grid.
    iterations : int
    final_residual : float
        Relative weighted residual of the last iterate.
    contraction_estimate : float
        Largest measured ratio of consecutive residuals (0 when fewer than
        two residuals exceed the rounding floor).
    ratios : tuple of float
        All measured residual ratios.
    rho : float or None
        Theoretical contraction constant, when known.
    tail_bound : float
        Bound on the effect at ``t = 0`` of truncating the history at ``-T``.
    """

    value_at_zero: np.ndarray
    u_traj: np.ndarray
    v_traj: np.ndarray
    times: np.ndarray
    iterations: int
    final_residual: float
    contraction_estimate: float
    residuals: tuple = ()
    ratios: tuple = ()
    rho: float | None = None
    tail_bound: float = 0.0

    @property
    def state(self):
        return self.u_traj, self.v_traj

    def contraction_ok(self, slack: float = 0.1) -> bool:
        return self.rho is None or self.contraction_estimate <= self.rho + slack

    def summary(self) -> dict:
        return {"iterations": self.iterations, "final_residual": self.final_residual,
                "contraction_estimate": self.contraction_estimate,
                "ratios": list(self.ratios), "rho": self.rho, "tail_bound": self.tail_bound}


def weighted_norm(parts: Sequence[np.ndarray], times: np.ndarray, weight: float) -> float:
    """``sum_k sup_j e^{-weight t_j} |parts[k][j]|``."""
    wts = np.exp(-weight * times)
    return float(sum(np.max(wts * np.linalg.norm(p, axis=1)) for p in parts))


def lp_contract(iteration_map: Callable, initial_guess, norm_cfg: WeightedNormConfig,
                times: np.ndarray, weight: float | None = None,
                rho_value: float | None = None) -> LPSolveResult:
    """Picard iteration ``Psi_{k+1} = J(Psi_k)`` in a weighted sup-norm.

    Parameters
    ----------
    iteration_map : callable
        Maps a tuple of arrays ``(U, V)`` to a tuple of the same shapes.
    initial_guess : tuple of ndarray
    norm_cfg : WeightedNormConfig
    times : ndarray
        Grid times, all ``<= 0``.
    weight : float, optional
        Weight exponent; defaults to ``norm_cfg.beta``.
    rho_value : float, optional
        Theoretical contraction constant, recorded in the result.

    Returns
    -------
    LPSolveResult

    Raises
    ------
    ContractionError
        ``max_iters`` exceeded, or the residual grows persistently.
    """
    w = norm_cfg.beta if weight is None else weight
    state = tuple(np.asarray(p, dtype=float) for p in initial_guess)
    guard_finite(*state, what="initial guess")
    residuals: list[float] = []
    ratios: list[float] = []
    for k in range(1, norm_cfg.max_iters + 1):
        new = tuple(iteration_map(state))
        guard_finite(*new, what="Picard iterate")
        size = max(1.0, weighted_norm(new, times, w))
        r = weighted_norm([n - s for n, s in zip(new, state)], times, w) / size
        residuals.append(r)
        if k >= 2 and residuals[-2] > RESIDUAL_FLOOR:
            ratios.append(r / residuals[-2])
        state = new
        if r <= norm_cfg.tol:
            return LPSolveResult(
                value_at_zero=state[-1][-1].copy(), u_traj=state[0],
                v_traj=state[-1], times=times, iterations=k, final_residual=r,
                contraction_estimate=max(ratios, default=0.0),
                residuals=tuple(residuals), ratios=tuple(ratios), rho=rho_value)
        if k >= 10 and all(q >= 1.0 for q in ratios[-8:]) and r > 1e6 * min(residuals):
            raise ContractionError(
                f"Picard residual ratio >= 1 persistently (last {ratios[-1]:.4g}); "
                f"rho >= 1 or the state left the Lipschitz box", residuals)
    raise ContractionError(
        f"Picard iteration did not reach tol {norm_cfg.tol:g} in {norm_cfg.max_iters} "
        f"iterations (last residual {residuals[-1]:.3g}, last ratio "
        f"{ratios[-1] if ratios else float('nan'):.4g})", residuals)


# ---------------------------------------------------------------- helpers

def _frame_rho(spec: SystemSpec, frame: Frame, guard: bool) -> float:
    if frame.kind == "critical":
        if guard and not rho_limit(spec) < RHO_GUARD:
            raise HypothesisError(
                f"rho -> {rho_limit(spec):.6g} >= {RHO_GUARD} as eps -> 0; critical "
                "solve refused")
        return rho_critical(spec)
    if guard:
        return check_eps(spec, frame.eps)
    eps = frame.eps
    beta = spec.beta
    K = spec.lipschitz
    return K / (-beta - spec.gamma_s) + K / (spec.gamma_f + eps * beta)


def _tail(setting: Setting, V: np.ndarray) -> float:
    lam = float(np.max(setting.frame.fast_rates))
    T = -setting.times[0]
    return float(math.exp(lam * T) * np.max(np.abs(V))) if V.size else 0.0


def _solve(setting: Setting, J, init, norm_cfg, r) -> LPSolveResult:
    res = lp_contract(J, init, norm_cfg, setting.times, setting.frame.weight, r)
    return replace(res, tail_bound=_tail(setting, res.v_traj))


def _as_base(base):
    x0, y0 = base
    return np.atleast_1d(np.asarray(x0, dtype=float)), np.atleast_1d(np.asarray(y0, dtype=float))


def make_setting(spec: SystemSpec, kind: str, eps: float, noise: NoisePaths,
                 norm_cfg: WeightedNormConfig) -> Setting:
    """Backward setting on ``[-T, 0]`` for frame ``kind``."""
    frame = make_frame(spec, kind, eps)
    return Setting.backward(spec, frame, noise, norm_cfg.T, norm_cfg.dt)


def solve_orbit(setting: Setting, x0, norm_cfg: WeightedNormConfig,
                guard: bool = True) -> tuple[Trajectory, LPSolveResult]:
    """Orbit through ``x0`` with tempered fast part (manifold LP equation)."""
    r = _frame_rho(setting.spec, setting.frame, guard)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    init = (setting.free_slow(x0), np.zeros((setting.grid.n_points, setting.spec.n_fast)))
    res = _solve(setting, lambda s: setting.orbit_pass(x0, *s), init, norm_cfg, r)
    traj = Trajectory(setting.grid, res.u_traj, res.v_traj, setting.frame.slow_tag,
                      {"frame": setting.frame.kind, "eps": setting.frame.eps})
    return traj, res


@dataclass
class _FiberContext:
    setting: Setting
    orbit: Trajectory
    Fb: np.ndarray
    Gb: np.ndarray
    x0: np.ndarray
    y0: np.ndarray
    rho: float
    orbit_result: LPSolveResult | None = None
    meta: dict = field(default_factory=dict)


def prepare_fiber(setting: Setting, base, norm_cfg: WeightedNormConfig,
                  guard: bool = True) -> _FiberContext:
    """Solve the base orbit once so several fibers can share it."""
    x0, y0 = _as_base(base)
    r = _frame_rho(setting.spec, setting.frame, guard)
    orbit, ores = solve_orbit(setting, x0, norm_cfg, guard=False)
    Xb, Yb = orbit.slow_states, orbit.fast_states
    ctx = _FiberContext(setting, orbit, setting.Fn(Xb, Yb), setting.Gn(Xb, Yb), x0, y0, r, ores)
    ctx.meta["y0_discrepancy"] = float(np.linalg.norm(Yb[-1] - y0))
    return ctx


def solve_fiber(ctx: _FiberContext, zeta, norm_cfg: WeightedNormConfig) -> tuple[np.ndarray, LPSolveResult]:
    """Fiber value ``l = Y0 + V(0)`` for the difference system with ``U(0) = zeta - X0``."""
    s = ctx.setting
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    if zeta.shape != ctx.x0.shape:
        raise ConfigError(f"zeta has shape {zeta.shape}, expected {ctx.x0.shape}")
    u0 = zeta - ctx.x0
    Xb, Yb = ctx.orbit.slow_states, ctx.orbit.fast_states
    init = (s.free_slow(u0), np.zeros_like(Yb))
    res = _solve(s, lambda st: s.difference_pass(Xb, Yb, ctx.Fb, ctx.Gb, u0, *st),
                 init, norm_cfg, ctx.rho)
    return ctx.y0 + res.value_at_zero, res


# ------------------------------------------------------------- public API

def lp_manifold(spec: SystemSpec, eps: float, noise: NoisePaths, zeta,
                norm_cfg: WeightedNormConfig) -> tuple[np.ndarray, LPSolveResult]:
    """Slow manifold value ``h(zeta) = Y(0)`` of the orbit with ``X(0) = zeta``.

    Returns
    -------
    h_value : ndarray
    result : LPSolveResult
        ``u_traj``/``v_traj`` hold the orbit ``(X, Y)``.
    """
    setting = make_setting(spec, "random", eps, noise, norm_cfg)
    _, res = solve_orbit(setting, zeta, norm_cfg)
    return res.value_at_zero, res


def base_orbit(spec: SystemSpec, eps: float, noise: NoisePaths, base,
               norm_cfg: WeightedNormConfig, kind: str = "random") -> Trajectory:
    """Tempered backward base orbit through ``X0`` in frame ``kind``."""
    setting = make_setting(spec, kind, eps, noise, norm_cfg)
    ctx = prepare_fiber(setting, base, norm_cfg)
    traj = ctx.orbit
    traj.meta.update(ctx.meta)
    return traj


def lp_fiber(spec: SystemSpec, eps: float, noise: NoisePaths, base, zeta,
             norm_cfg: WeightedNormConfig) -> tuple[np.ndarray, LPSolveResult]:
    """Slow fiber value ``l(zeta, (X0, Y0))`` in the original time frame.

    Raises
    ------
    HypothesisError
        ``eps`` outside the admissible range.
    ContractionError
        Picard iteration failed.
    """
    ctx = prepare_fiber(make_setting(spec, "random", eps, noise, norm_cfg), base, norm_cfg)
    return solve_fiber(ctx, zeta, norm_cfg)


def lp_fiber_scaled(spec: SystemSpec, eps: float, noise: NoisePaths, base, zeta,
                    norm_cfg: WeightedNormConfig, guard: bool = True) -> tuple[np.ndarray, LPSolveResult]:
    """Fiber value of the time-rescaled system (noise ``delta(eps t)``, ``xi(t)``).

    ``guard=False`` admits any real ``eps``, including negative values used
    by finite-difference checks.
    """
    ctx = prepare_fiber(make_setting(spec, "scaled", eps, noise, norm_cfg), base, norm_cfg, guard)
    return solve_fiber(ctx, zeta, norm_cfg)


def lp_critical_fiber(spec: SystemSpec, noise: NoisePaths, base, zeta,
                      norm_cfg: WeightedNormConfig) -> tuple[np.ndarray, LPSolveResult]:
    """Critical fiber value ``l0``: slow difference frozen at ``zeta - X0``."""
    ctx = prepare_fiber(make_setting(spec, "critical", 0.0, noise, norm_cfg), base, norm_cfg)
    return solve_fiber(ctx, zeta, norm_cfg)


# ---------------------------------------------------------- first order

@dataclass(frozen=True)
class FirstOrderSolution:
    """Critical orbits and first-order corrections on ``[-T, 0]``."""

    X0: Trajectory  # critical base orbit (X frozen, Y tempered)
    U0: Trajectory  # critical difference orbit
    X1: Trajectory  # slow part X1, fast part Y1
    U1: Trajectory  # slow part U1, fast part V1
    l0: np.ndarray
    l1: np.ndarray


def _linear_tempered(setting: Setting, forcing: Callable, n: int, norm_cfg) -> np.ndarray:
    """Tempered solution of ``Z' = B Z + forcing(Z)`` (forcing affine in Z)."""
    zeros = np.zeros((setting.grid.n_points, n))
    res = lp_contract(lambda s: (s[0], setting.fast.tempered(forcing(s[1]))),
                      (zeros[:, :0], zeros), norm_cfg, setting.times, setting.frame.weight)
    return res.v_traj


def solve_order1_systems(spec: SystemSpec, noise: NoisePaths, base, zeta,
                         norm_cfg: WeightedNormConfig) -> FirstOrderSolution:
    """First-order corrections of the rescaled fiber in eps.

    Along the critical orbit ``(X0, Y0)`` and difference ``(U0, V0)``::

        X1(t) = int_0^t [A X0 + F(X0, Y0)] ds
        Y1'   = B Y1 + g_x X1 + g_y Y1                       (tempered)
        U1(t) = int_0^t [A U0 + F(X0 + U0, Y0 + V0) - F(X0, Y0)] ds
        V1'   = B V1 + g_x(.) (U1 + X1) + g_y(.) (V1 + Y1)
                     - g_x X1 - g_y Y1                        (tempered)

    with derivatives of g at the shifted points ``(x + delta(0), y + xi)``.
    """
    setting = make_setting(spec, "critical", 0.0, noise, norm_cfg)
    ctx = prepare_fiber(setting, base, norm_cfg)
    l0, res0 = solve_fiber(ctx, zeta, norm_cfg)
    Xc, Yc = ctx.orbit.slow_states, ctx.orbit.fast_states
    U0, V0 = res0.u_traj, res0.v_traj
    dv, fv = setting.dvals, setting.fvals
    a = spec.a
    quad = ExpConv(np.zeros(spec.n_slow), 1.0, setting.grid.dt)

    X1 = quad.backward(a * Xc + ctx.Fb, 0.0)
    bx, by = Xc + dv, Yc + fv
    Y1 = _linear_tempered(setting, lambda Y: spec.dG(bx, by, X1, Y), spec.n_fast, norm_cfg)

    U1 = quad.backward(a * U0 + setting.Fn(Xc + U0, Yc + V0) - ctx.Fb, 0.0)
    fx, fy = Xc + U0 + dv, Yc + V0 + fv
    base_term = spec.dG(bx, by, X1, Y1)
    V1 = _linear_tempered(setting, lambda V: spec.dG(fx, fy, U1 + X1, V + Y1) - base_term,
                          spec.n_fast, norm_cfg)
    guard_finite(X1, Y1, U1, V1, what="first-order state")
    g = setting.grid
    return FirstOrderSolution(
        X0=ctx.orbit,
        U0=Trajectory(g, U0, V0, "critical"),
        X1=Trajectory(g, X1, Y1, "first_order"),
        U1=Trajectory(g, U1, V1, "first_order", {"l1_tempered": V1[-1].copy()}),
        l0=l0,
        l1=V1[-1].copy(),
    )


def lp_first_order(spec: SystemSpec, noise: NoisePaths, base, zeta,
                   norm_cfg: WeightedNormConfig, solution: FirstOrderSolution | None = None) -> np.ndarray:
    """First-order fiber coefficient ``l1`` by product quadrature.

    Evaluates ``int_{-T}^0 e^{-B s} [g_x(zeta + delta, V0 + Y0 + xi)(U1 + X1)
    + g_y(...)(V1 + Y1) - g_x(X0 + delta, Y0 + xi) X1 - g_y(...) Y1] ds``.
    """
    sol = solution or solve_order1_systems(spec, noise, base, zeta, norm_cfg)
    setting = make_setting(spec, "critical", 0.0, noise, norm_cfg)
    dv, fv = setting.dvals, setting.fvals
    Xc, Yc = sol.X0.slow_states, sol.X0.fast_states
    U0, V0 = sol.U0.slow_states, sol.U0.fast_states
    X1, Y1 = sol.X1.slow_states, sol.X1.fast_states
    U1, V1 = sol.U1.slow_states, sol.U1.fast_states
    integrand = (spec.dG(Xc + U0 + dv, Yc + V0 + fv, U1 + X1, V1 + Y1)
                 - spec.dG(Xc + dv, Yc + fv, X1, Y1))
    return setting.fast.weighted_integral(integrand, setting.times)


# ------------------------------------------------------------- fiber table

@dataclass(frozen=True)
class FiberTable:
    """Fiber values over a grid of slow points for one base point and noise."""

    kind: str
    eps: float
    base: tuple
    zeta_grid: np.ndarray
    l_values: np.ndarray
    diagnostics: tuple
    lipschitz_bound: float | None = None

    def to_csv(self, fh) -> None:
        ns, nf = self.zeta_grid.shape[1], self.l_values.shape[1]
        header = ",".join([f"zeta_{k}" for k in range(ns)] + [f"l_{k}" for k in range(nf)]
                          + ["iterations", "residual"])
        fh.write(header + "\n")
        for z, l, d in zip(self.zeta_grid, self.l_values, self.diagnostics):
            row = [repr(float(v)) for v in z] + [repr(float(v)) for v in l]
            row += [str(d["iterations"]), repr(float(d["final_residual"]))]
            fh.write(",".join(row) + "\n")


def lipschitz_bound(spec: SystemSpec, kind: str, eps: float) -> float | None:
    """Theoretical Lipschitz constant of the fiber map of ``kind``."""
    K = spec.lipschitz
    if kind == "critical":
        den = spec.gamma_f + spec.beta - K
        return K / den if den > 0 else None
    r = rho(spec, eps)
    if r >= 1:
        return None
    return K / (spec.gamma_f + eps * spec.beta) / (1.0 - r)


def fiber_table(spec: SystemSpec, eps: float, noise: NoisePaths, base, zeta_grid,
                norm_cfg: WeightedNormConfig, kind: str = "random") -> FiberTable:
    """Fiber values over ``zeta_grid`` sharing one base orbit."""
    setting = make_setting(spec, kind, eps if kind != "critical" else 0.0, noise, norm_cfg)
    ctx = prepare_fiber(setting, base, norm_cfg)
    zs = np.atleast_2d(np.asarray(zeta_grid, dtype=float))
    if zs.shape[1] != spec.n_slow:
        zs = zs.reshape(-1, spec.n_slow)
    vals, diags = [], []
    for z in zs:
        l, res = solve_fiber(ctx, z, norm_cfg)
        vals.append(l)
        d = res.summary()
        d["y0_discrepancy"] = ctx.meta["y0_discrepancy"]
        diags.append(d)
    return FiberTable(kind, eps, _as_base(base), zs, np.array(vals), tuple(diags),
                      lipschitz_bound(spec, kind, eps))


def fiber_membership_residual(table: FiberTable) -> float:
    """Distance of the base point from its own fiber (0 when the grid misses X0)."""
    x0, y0 = table.base
    hits = np.all(np.isclose(table.zeta_grid, x0, atol=0, rtol=0), axis=1)
    if not hits.any():
        return 0.0
    return float(np.max(np.linalg.norm(table.l_values[hits] - y0, axis=1)))


def check_on_fiber(ctx: _FiberContext, point, norm_cfg, tol: float) -> float:
    """Residual ``|y - l(x)|`` of ``point = (x, y)``; raises when above ``tol``."""
    x, y = _as_base(point)
    l, _ = solve_fiber(ctx, x, norm_cfg)
    r = float(np.linalg.norm(y - l))
    if r > tol:
        raise NotOnFiberError(f"point {point} is off the fiber: |y - l(x)| = {r:.3g} > {tol:g}")
    return r
