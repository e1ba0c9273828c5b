"""Verification drivers and Monte-Carlo studies.

Convergence in distribution is measured by the empirical Wasserstein-1
distance between scalar projections (fast-mode coefficients) of fiber
values over noise replicas; studies pair the rescaled and critical fibers
on the same noise path.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import integrate_forward
from .errors import ConfigError, GridError, NotOnFiberError, SlowfolError
from .lp import (FiberTable, WeightedNormConfig, lp_fiber, lp_first_order,
                 make_setting, prepare_fiber, solve_fiber, solve_orbit,
                 solve_order1_systems)
from .noise import NoisePaths, replica_seed, sample_noise
from .sysspec import SystemSpec, check_eps


def alpha_midpoint(spec: SystemSpec) -> float:
    """Weight ``-gamma_f^2 / (-gamma_s + 2 gamma_f)`` used for diagnostics."""
    return -spec.gamma_f ** 2 / (-spec.gamma_s + 2.0 * spec.gamma_f)


def rate_factor(spec: SystemSpec, eps: float) -> float:
    """``1/gamma_f - 1/(gamma_f - eps gamma_s)``, the O(eps) factor of the convergence bound."""
    return 1.0 / spec.gamma_f - 1.0 / (spec.gamma_f - eps * spec.gamma_s)


# --------------------------------------------------------------- metrics

def wasserstein1(samples_a, samples_b) -> float:
    """Empirical 1-Wasserstein distance between two scalar samples.

    Equal sizes use the mean absolute difference of order statistics;
    otherwise the exact integral of the quantile-function difference.
    """
    a = np.sort(np.ravel(np.asarray(samples_a, dtype=float)))
    b = np.sort(np.ravel(np.asarray(samples_b, dtype=float)))
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein1 needs nonempty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    na, nb = a.size, b.size
    u = np.union1d(np.arange(na + 1) / na, np.arange(nb + 1) / nb)
    mid = 0.5 * (u[:-1] + u[1:])
    qa = a[np.minimum((mid * na).astype(np.int64), na - 1)]
    qb = b[np.minimum((mid * nb).astype(np.int64), nb - 1)]
    return float(np.sum(np.abs(qa - qb) * np.diff(u)))


def fit_order(eps_list: Sequence[float], metric: Sequence[float]) -> float:
    """Least-squares slope of ``log metric`` against ``log eps``."""
    e = np.asarray(eps_list, dtype=float)
    m = np.asarray(metric, dtype=float)
    ok = m > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(e[ok]), np.log(m[ok]), 1)[0])


# ------------------------------------------------------------- rate fits

@dataclass(frozen=True)
class RateFit:
    """Backward exponential approach of two points on one fiber.

    Attributes
    ----------
    times, log_distances : ndarray
        Grid times in the window and ``log`` of the state distance.
    fitted_slope : float
        Least-squares slope of the log distance over points above the noise
        floor (``inf`` when the distance vanishes identically).
    bound_slope : float
        The guaranteed rate ``beta``.
    bound_constant_ok : bool
        Whether ``dist(t) <= slack e^{beta t} |x1 - x2| / (1 - rho)`` at every
        grid time.
    fit_residual : float
        RMS residual of the linear fit.
    n_fit_points : int
    """

    times: np.ndarray
    log_distances: np.ndarray
    fitted_slope: float
    bound_slope: float
    bound_constant_ok: bool
    fit_residual: float
    n_fit_points: int
    max_bound_ratio: float
    rho: float

    @property
    def slope_ok(self) -> bool:
        return self.fitted_slope >= self.bound_slope

    @property
    def passed(self) -> bool:
        return self.bound_constant_ok and self.slope_ok

    def summary(self) -> dict:
        return {"fitted_slope": self.fitted_slope, "bound_slope": self.bound_slope,
                "bound_constant_ok": self.bound_constant_ok, "slope_ok": self.slope_ok,
                "fit_residual": self.fit_residual, "n_fit_points": self.n_fit_points,
                "max_bound_ratio": self.max_bound_ratio, "rho": self.rho}


def backward_rate(spec: SystemSpec, eps: float, noise: NoisePaths, base, p1, p2,
                  norm_cfg: WeightedNormConfig, window: float = 10.0,
                  slack: float = 1.05, fiber_tol: float = 1e-6) -> RateFit:
    """Measure how fast two points of one fiber approach each other backward.

    Both points must lie on the fiber of ``base`` (checked against the
    computed fiber with tolerance ``fiber_tol``).

    Raises
    ------
    NotOnFiberError
        A point is off the fiber.
    """
    r = check_eps(spec, eps)
    setting = make_setting(spec, "random", eps, noise, norm_cfg)
    ctx = prepare_fiber(setting, base, norm_cfg)
    states = []
    for p in (p1, p2):
        x, y = (np.atleast_1d(np.asarray(v, dtype=float)) for v in p)
        l, res = solve_fiber(ctx, x, norm_cfg)
        if np.linalg.norm(y - l) > fiber_tol * max(1.0, float(np.linalg.norm(l))):
            raise NotOnFiberError(
                f"point ({x.tolist()}, {y.tolist()}) is off the fiber: |y - l(x)| = "
                f"{np.linalg.norm(y - l):.3g}; the backward bound does not apply")
        states.append((x, res))
    (x1, r1), (x2, r2) = states
    times = setting.times
    sel = times >= -window - 1e-12
    t = times[sel]
    dist = (np.linalg.norm(r1.u_traj - r2.u_traj, axis=1)
            + np.linalg.norm(r1.v_traj - r2.v_traj, axis=1))[sel]
    dx = float(np.linalg.norm(x1 - x2))
    beta = spec.beta
    bound = np.exp(beta * t) * dx / (1.0 - r)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, dist / bound, np.where(dist > 0, np.inf, 0.0))
    bound_ok = bool(np.all(dist <= slack * bound + 1e-14))
    floor = 10.0 * norm_cfg.tol * max(1.0, float(np.max(dist)) if dist.size else 1.0)
    mask = dist > floor
    with np.errstate(divide="ignore"):
        logd = np.log(dist)
    if not np.any(dist > 0):
        slope, resid, n = math.inf, 0.0, 0
    elif mask.sum() >= 5:
        coef, res_ss, *_ = np.polyfit(t[mask], logd[mask], 1, full=True)
        slope = float(coef[0])
        n = int(mask.sum())
        resid = float(math.sqrt(res_ss[0] / n)) if res_ss.size else 0.0
    else:
        slope, resid, n = float("nan"), float("nan"), int(mask.sum())
    return RateFit(t, logd, slope, beta, bound_ok, resid, n,
                   float(np.max(ratio)) if ratio.size else 0.0, r)


# ------------------------------------------------------------ parallelism

def parallelism_offset(fiber_table: FiberTable, manifold_values, h_base) -> float:
    """``max_zeta |l(zeta) - h(zeta) - (Y0 - h(X0))|`` over the table's grid.

    Raises
    ------
    GridError
        ``manifold_values`` does not match the table's grid.
    """
    h = np.asarray(manifold_values, dtype=float).reshape(fiber_table.l_values.shape[0], -1)
    if h.shape != fiber_table.l_values.shape:
        raise GridError("manifold values do not match the fiber grid")
    _, y0 = fiber_table.base
    m = fiber_table.l_values - h
    target = y0 - np.asarray(h_base, dtype=float)
    return float(np.max(np.linalg.norm(m - target, axis=1)))


def parallelism_check(spec: SystemSpec, eps: float, noise: NoisePaths, base, zeta_grid,
                      norm_cfg: WeightedNormConfig) -> dict:
    """Fiber and manifold over ``zeta_grid`` on one noise path, and their offset."""
    setting = make_setting(spec, "random", eps, noise, norm_cfg)
    ctx = prepare_fiber(setting, base, norm_cfg)
    zs = np.asarray(zeta_grid, dtype=float).reshape(-1, spec.n_slow)
    ls, hs, diags = [], [], []
    for z in zs:
        l, res = solve_fiber(ctx, z, norm_cfg)
        _, hres = solve_orbit(setting, z, norm_cfg)
        ls.append(l)
        hs.append(hres.value_at_zero)
        diags.append(res.summary())
    table = FiberTable("random", eps, (ctx.x0, ctx.y0), zs, np.array(ls),
                       tuple(diags))
    h_base = ctx.orbit.fast_states[-1]
    dev = parallelism_offset(table, np.array(hs), h_base)
    offsets = (np.array(ls) - np.array(hs)).tolist()
    return {"deviation": dev, "h_base": h_base.tolist(), "offsets": offsets,
            "l_values": table.l_values.tolist(), "h_values": np.array(hs).tolist(),
            "y0_discrepancy": ctx.meta["y0_discrepancy"]}


# ------------------------------------------------------------- invariance

def invariance_check(spec: SystemSpec, eps: float, noise: NoisePaths, base, point,
                     tau: float, norm_cfg: WeightedNormConfig) -> float:
    """Residual of a fiber point flowed by ``tau`` against the flowed fiber.

    Flows ``base`` and ``point`` forward to ``tau``, recomputes the fiber of
    the flowed base under the shifted noise and returns ``|y(tau) - l(x(tau))|``.
    The noise must cover ``[-T, tau]``.
    """
    if not tau > 0:
        raise ConfigError("tau must be positive")
    dt = norm_cfg.dt
    bx, by = (np.atleast_1d(np.asarray(v, dtype=float)) for v in base)
    px, py = (np.atleast_1d(np.asarray(v, dtype=float)) for v in point)
    tb = integrate_forward(spec, eps, noise, bx, by, tau, dt)
    tp = integrate_forward(spec, eps, noise, px, py, tau, dt)
    shifted = noise.shifted(tau)
    new_base = (tb.slow_states[-1], tb.fast_states[-1])
    l, _ = lp_fiber(spec, eps, shifted, new_base, tp.slow_states[-1], norm_cfg)
    return float(np.linalg.norm(tp.fast_states[-1] - l))


# ----------------------------------------------------------- lipschitz

def lipschitz_estimate(fiber_table: FiberTable, slack: float = 1e-6):
    """Largest difference quotient of the fiber map over grid pairs.

    Returns
    -------
    estimate, bound, ok
        ``bound`` is the theoretical constant (None if unavailable) and
        ``ok`` whether the estimate stays below it up to ``slack``.
    """
    z, l = fiber_table.zeta_grid, fiber_table.l_values
    if z.shape[0] < 2:
        raise ConfigError("lipschitz_estimate needs at least two grid points")
    dz = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=-1)
    dl = np.linalg.norm(l[:, None, :] - l[None, :, :], axis=-1)
    mask = dz > 0
    est = float(np.max(dl[mask] / dz[mask])) if mask.any() else 0.0
    bound = fiber_table.lipschitz_bound
    ok = bound is not None and est <= bound * (1.0 + slack) + slack
    return est, bound, ok


# --------------------------------------------------------------- studies

@dataclass(frozen=True)
class StudyReport:
    """Metric per eps with fitted order and pass/fail checks.

    ``metric`` is the max over zeta and fast modes of the per-mode
    statistic (Wasserstein-1 for convergence studies, mean absolute
    residual for order studies).
    """

    kind: str
    eps_list: tuple
    metric: tuple
    stderr: tuple
    fitted_order: float
    tolerance_band: tuple
    replica_count: int
    base_seed: int
    seeds: tuple
    per_zeta: tuple
    ratio_band: tuple
    halving_ratios: tuple
    metric_over_eps: tuple
    failed_replicas: tuple = ()
    metric_name: str = "wasserstein1"
    extra: dict = field(default_factory=dict)

    @property
    def order_ok(self) -> bool:
        lo, hi = self.tolerance_band
        return lo <= self.fitted_order <= hi

    @property
    def ratios_ok(self) -> bool:
        lo, hi = self.ratio_band
        return all(lo <= q <= hi for q in self.halving_ratios)

    @property
    def monotone_ok(self) -> bool:
        m, s = self.metric, self.stderr
        return all(m[k + 1] <= m[k] + 2.0 * max(s[k], s[k + 1]) for k in range(len(m) - 1))

    @property
    def passed(self) -> bool:
        return self.order_ok and self.ratios_ok

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "metric_name": self.metric_name,
            "eps_list": list(self.eps_list), "metric": list(self.metric),
            "stderr": list(self.stderr), "fitted_order": self.fitted_order,
            "tolerance_band": list(self.tolerance_band),
            "ratio_band": list(self.ratio_band),
            "halving_ratios": list(self.halving_ratios),
            "metric_over_eps": list(self.metric_over_eps),
            "order_ok": self.order_ok, "ratios_ok": self.ratios_ok,
            "monotone_ok": self.monotone_ok, "passed": self.passed,
            "replica_count": self.replica_count, "base_seed": self.base_seed,
            "seed_rule": "splitmix64(base_seed xor replica_index)",
            "seeds": list(self.seeds), "failed_replicas": list(self.failed_replicas),
            "per_zeta": [list(r) for r in self.per_zeta], **self.extra,
        }

    def to_csv(self, fh) -> None:
        fh.write("eps,metric,stderr\n")
        for e, m, s in zip(self.eps_list, self.metric, self.stderr):
            fh.write(f"{e!r},{m!r},{s!r}\n")


def _delta_step(eps_list, dt) -> float | None:
    """Common delta step ``dt * min(eps)`` if every eps is an integer multiple."""
    e_min = min(eps_list)
    for e in eps_list:
        q = e / e_min
        if abs(q - round(q)) > 1e-9:
            return None
    return dt * e_min


def _study_noises(spec, seed, cfg: WeightedNormConfig, eps_list):
    """Noise for every eps: shared when a common delta grid exists."""
    ddt = _delta_step(eps_list, cfg.dt)
    if ddt is not None:
        nz = sample_noise(spec, seed, -cfg.T, 0.0, cfg.dt, delta_dt=ddt,
                          delta_window=(-max(eps_list) * cfg.T, 0.0))
        return [nz] * len(eps_list)
    return [sample_noise(spec, seed, -cfg.T, 0.0, cfg.dt, delta_dt=cfg.dt * e,
                         delta_window=(-e * cfg.T, 0.0)) for e in eps_list]


def _replica_work(args):
    spec, base, zetas, eps_list, seed, cfg, with_first_order = args
    try:
        noises = _study_noises(spec, seed, cfg, eps_list)
        n_e, n_z = len(eps_list), len(zetas)
        ls = np.empty((n_e, n_z, spec.n_fast))
        l0 = np.empty_like(ls)
        l1 = np.empty_like(ls)
        cache = {}
        for k, (eps, nz) in enumerate(zip(eps_list, noises)):
            ctx = prepare_fiber(make_setting(spec, "scaled", eps, nz, cfg), base, cfg)
            key = id(nz)
            if key not in cache:
                cctx = prepare_fiber(make_setting(spec, "critical", 0.0, nz, cfg), base, cfg)
                c0 = np.array([solve_fiber(cctx, z, cfg)[0] for z in zetas])
                c1 = None
                if with_first_order:
                    c1 = np.array([lp_first_order(spec, nz, base, z, cfg,
                                                  solve_order1_systems(spec, nz, base, z, cfg))
                                   for z in zetas])
                cache[key] = (c0, c1)
            c0, c1 = cache[key]
            for j, z in enumerate(zetas):
                ls[k, j] = solve_fiber(ctx, z, cfg)[0]
            l0[k] = c0
            if c1 is not None:
                l1[k] = c1
        return ls, l0, l1 if with_first_order else None
    except SlowfolError as exc:  # counted towards the failure quorum
        return exc


def default_workers() -> int:
    """Worker count: ``SLOWFOL_THREADS`` if set, else the number of cores."""
    env = os.environ.get("SLOWFOL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"SLOWFOL_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("SLOWFOL_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def _run_replicas(spec, base, zetas, eps_list, seed, n_replicas, cfg, with_first_order, workers):
    seeds = [replica_seed(seed, i) for i in range(n_replicas)]
    jobs = [(spec, base, zetas, tuple(eps_list), s, cfg, with_first_order) for s in seeds]
    if workers and workers > 1 and n_replicas > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_replica_work, jobs, chunksize=max(1, n_replicas // (4 * workers))))
    else:
        out = [_replica_work(j) for j in jobs]
    failed = tuple(i for i, o in enumerate(out) if isinstance(o, Exception))
    if len(failed) > 0.05 * n_replicas:
        raise SlowfolError(f"{len(failed)} of {n_replicas} replicas failed: {out[failed[0]]}")
    good = [o for o in out if not isinstance(o, Exception)]
    return seeds, failed, good


def _prepare_study(spec, base, zeta_set, eps_list, n_replicas):
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 2:
        raise ConfigError("a study needs at least two eps values")
    if any(eps_list[k + 1] >= eps_list[k] for k in range(len(eps_list) - 1)):
        raise ConfigError("eps_list must be strictly decreasing")
    for e in eps_list:
        check_eps(spec, e)
    if n_replicas < 1:
        raise ConfigError("n_replicas must be positive")
    zetas = [np.atleast_1d(np.asarray(z, dtype=float)) for z in zeta_set]
    if not zetas or any(z.shape != (spec.n_slow,) for z in zetas):
        raise ConfigError(f"zeta_set must hold slow vectors of length {spec.n_slow}")
    x0, y0 = base
    base = (np.atleast_1d(np.asarray(x0, dtype=float)), np.atleast_1d(np.asarray(y0, dtype=float)))
    return base, zetas, eps_list


def _bootstrap_stderr(stat_fn, n: int, seed: int, n_boot: int = 200) -> float:
    rng = np.random.default_rng(np.random.SeedSequence([seed & ((1 << 64) - 1), 0xB007]))
    vals = [stat_fn(rng.integers(0, n, n)) for _ in range(n_boot)]
    return float(np.std(vals, ddof=1)) if n > 1 else 0.0


def _halving(eps_list, metric, power):
    ratios, over = [], []
    for k in range(len(eps_list) - 1):
        m_next = metric[k + 1]
        ratios.append(metric[k] / m_next if m_next > 0 else (1.0 if metric[k] == 0 else math.inf))
    for e, m in zip(eps_list, metric):
        over.append(m / e ** power)
    return tuple(ratios), tuple(over)


def convergence_study(spec: SystemSpec, base, zeta_set, eps_list, n_replicas: int,
                      seed: int, norm_cfg: WeightedNormConfig,
                      workers: int = 1, band=(0.7, 1.3)) -> StudyReport:
    """Distributional distance between rescaled and critical fibers per eps.

    For every replica the rescaled fiber and the critical fiber are computed
    on the same noise; per eps the metric is the largest Wasserstein-1
    distance over zeta and fast modes. The fitted order of the metric in
    eps is checked against ``band`` and consecutive ratios against
    ``[q/2, 2q]`` for an eps ratio ``q``.

    Raises
    ------
    ConfigError
        f unbounded, or malformed study inputs.
    SlowfolError
        More than 5 % of the replicas failed.
    """
    if not spec.f.bounded_flag:
        raise ConfigError("convergence study requires a bounded slow nonlinearity f")
    base, zetas, eps_list = _prepare_study(spec, base, zeta_set, eps_list, n_replicas)
    seeds, failed, good = _run_replicas(spec, base, zetas, eps_list, seed, n_replicas,
                                        norm_cfg, False, workers)
    ls = np.stack([g[0] for g in good], axis=1)  # (eps, rep, zeta, mode)
    l0 = np.stack([g[1] for g in good], axis=1)
    n = ls.shape[1]

    def stat(k, idx):
        a, b = ls[k][idx], l0[k][idx]
        return max(wasserstein1(a[:, j, q], b[:, j, q])
                   for j in range(a.shape[1]) for q in range(a.shape[2]))

    metric, stderr, per_zeta = [], [], []
    for k in range(len(eps_list)):
        full = np.arange(n)
        metric.append(stat(k, full))
        stderr.append(_bootstrap_stderr(lambda idx: stat(k, idx), n, seed + k))
        per_zeta.append(tuple(max(wasserstein1(ls[k][:, j, q], l0[k][:, j, q])
                                  for q in range(ls.shape[3])) for j in range(len(zetas))))
    q = eps_list[0] / eps_list[1]
    ratios, over = _halving(eps_list, metric, 1)
    return StudyReport("convergence", tuple(eps_list), tuple(metric), tuple(stderr),
                       fit_order(eps_list, metric), tuple(band), n, int(seed), tuple(seeds),
                       tuple(per_zeta), (q / 2.0, 2.0 * q), ratios, over, failed,
                       extra={"rate_factor": [rate_factor(spec, e) for e in eps_list],
                              "alpha": alpha_midpoint(spec)})


def order_study(spec: SystemSpec, base, zeta_set, eps_list, n_replicas: int, seed: int,
                norm_cfg: WeightedNormConfig, workers: int = 1,
                band=(1.7, 2.3)) -> StudyReport:
    """Residual of the first-order expansion ``l0 + eps l1`` per eps.

    Per replica and zeta computes ``r = |l_scaled - (l0 + eps l1)|``; the
    metric is the replica mean of the largest residual over zeta and fast
    modes. Richardson ratios must lie in ``[q^2/2, 2 q^2]``.
    """
    base, zetas, eps_list = _prepare_study(spec, base, zeta_set, eps_list, n_replicas)
    seeds, failed, good = _run_replicas(spec, base, zetas, eps_list, seed, n_replicas,
                                        norm_cfg, True, workers)
    ls = np.stack([g[0] for g in good], axis=1)
    l0 = np.stack([g[1] for g in good], axis=1)
    l1 = np.stack([g[2] for g in good], axis=1)
    n = ls.shape[1]
    metric, stderr, per_zeta = [], [], []
    for k, e in enumerate(eps_list):
        r = np.abs(ls[k] - (l0[k] + e * l1[k]))  # (rep, zeta, mode)
        per_rep = r.max(axis=(1, 2))
        metric.append(float(per_rep.mean()))
        stderr.append(float(per_rep.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0)
        per_zeta.append(tuple(float(v) for v in r.max(axis=2).mean(axis=0)))
    q = eps_list[0] / eps_list[1]
    ratios, over = _halving(eps_list, metric, 2)
    return StudyReport("order", tuple(eps_list), tuple(metric), tuple(stderr),
                       fit_order(eps_list, metric), tuple(band), n, int(seed), tuple(seeds),
                       tuple(per_zeta), (q * q / 2.0, 2.0 * q * q), ratios, over, failed,
                       metric_name="mean_abs_residual",
                       extra={"l1_mean": l1.mean(axis=1)[0].tolist()})
