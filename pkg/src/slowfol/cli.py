"""Command-line front end.

Usage::

    slowfol <subcommand> --config <file> [--output <dir>] [--seed <u64>]

Each run writes ``<command>-<hash>.json`` and zero or more
``<command>-<hash>*.csv`` files, where ``<hash>`` is the first 12 hex digits
of the SHA-256 of the canonical configuration. Exit codes: 0 success,
1 verification failure, 2 usage or configuration error, 3 numerical or I/O
failure.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import platform
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (backward_rate, convergence_study, default_workers, invariance_check,
                       lipschitz_estimate, order_study, parallelism_check)
from .config import COMMANDS, RunConfig, config_hash, parse_config
from .errors import ConfigError, HypothesisError, NotOnFiberError, SlowfolError
from .examples import (MOTIVATING_ORACLES, oracle_motivating_convergence,
                       oracle_motivating_order_residual)
from .lp import (FiberTable, fiber_membership_residual, fiber_table, lipschitz_bound, lp_fiber,
                 lp_fiber_scaled, lp_first_order, lp_manifold, solve_order1_systems)
from .noise import check_eta_xi_law, replica_seed, sample_noise
from .sysspec import eps0, rho, rho_critical, rho_limit, validate_hypotheses

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
THREADS_ENV = "SLOWFOL_THREADS"


@dataclass
class Report:
    """Results of one command, ready for :func:`write_report`."""

    cfg: RunConfig
    gate: dict
    results: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # file suffix -> CSV text
    seeds: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def stem(self) -> str:
        return f"{self.cfg.command}-{self.cfg.config_hash[:12]}"


# ----------------------------------------------------------------- helpers

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                           for v in row) + "\n")
    return buf.getvalue()


def _table_csv(table: FiberTable) -> str:
    buf = io.StringIO()
    table.to_csv(buf)
    return buf.getvalue()


def _workers(cfg: RunConfig) -> int:
    """``SLOWFOL_THREADS`` wins over the config key; the core count is the fallback."""
    if os.environ.get(THREADS_ENV) or not cfg.workers:
        return default_workers()
    return cfg.workers


def _is_motivating(cfg: RunConfig) -> bool:
    return cfg.raw["system"].get("builtin") == "motivating"


def _seeds(cfg: RunConfig) -> list[int]:
    return [replica_seed(cfg.seed, i) for i in range(cfg.study["replicas"])]


def _noise(cfg: RunConfig, seed: int, eps: float | None, t_max: float = 0.0, scaled: bool = False):
    n = cfg.numerics
    if scaled:
        return sample_noise(cfg.system, seed, -n.T, 0.0, n.dt, delta_dt=eps * n.dt,
                            delta_window=(-eps * n.T, 0.0))
    return sample_noise(cfg.system, seed, -n.T, t_max, n.dt, eps=eps)


def _suffix(i: int, n: int) -> str:
    return "" if n == 1 else f"-r{i}"


def _contraction_ok(diags, slack: float) -> bool:
    return all(d["rho"] is None or d["contraction_estimate"] <= d["rho"] + slack for d in diags)


def _oracle_check(rep: Report, name: str, computed, expected, tol: float) -> None:
    err = float(np.max(np.abs(np.asarray(computed) - np.asarray(expected))))
    rep.results.setdefault("oracle", {})[name] = {"max_abs_error": err, "tolerance": tol}
    rep.checks[f"oracle_{name}"] = err <= tol


# ---------------------------------------------------------------- commands

def _cmd_check(cfg: RunConfig, rep: Report) -> None:
    spec = cfg.system
    res = {"gap_bound": spec.gap_bound, "beta": spec.beta, "lipschitz": spec.lipschitz,
           "gamma_s": spec.gamma_s, "gamma_f": spec.gamma_f,
           "rho_limit": rho_limit(spec), "rho_critical": rho_critical(spec),
           "eps0": eps0(spec), "critical_lipschitz_bound": lipschitz_bound(spec, "critical", 0.0)}
    if "eps" in cfg.study:
        e = cfg.study["eps"]
        res["rho"] = rho(spec, e)
        res["fiber_lipschitz_bound"] = lipschitz_bound(spec, "random", e)
    rep.results.update(res)
    rep.checks["gate"] = rep.gate["status"] != "fail"


def _cmd_manifold(cfg: RunConfig, rep: Report) -> None:
    spec, ncfg, eps = cfg.system, cfg.numerics, cfg.study["eps"]
    zetas = cfg.zeta_grid()
    n = cfg.study["replicas"]
    all_h, diags_all = [], []
    for i, s in enumerate(rep.seeds):
        noise = _noise(cfg, s, eps)
        hs, diags = [], []
        for z in zetas:
            h, res = lp_manifold(spec, eps, noise, z, ncfg)
            hs.append(h)
            diags.append(res.summary())
        hs = np.array(hs)
        all_h.append(hs)
        diags_all.extend(diags)
        header = ([f"zeta_{k}" for k in range(spec.n_slow)] + [f"h_{k}" for k in range(spec.n_fast)]
                  + ["iterations", "residual"])
        rows = [list(z) + list(h) + [d["iterations"], d["final_residual"]]
                for z, h, d in zip(zetas, hs, diags)]
        rep.tables[_suffix(i, n)] = _csv(header, rows)
    rep.results["h_values"] = [h.tolist() for h in all_h]
    rep.results["diagnostics"] = diags_all
    rep.checks["contraction"] = _contraction_ok(diags_all, ncfg.slack)
    if _is_motivating(cfg):
        expected = MOTIVATING_ORACLES.manifold_fn(eps, zetas)
        _oracle_check(rep, "manifold", np.array(all_h), np.broadcast_to(expected, np.shape(all_h)),
                      cfg.study.get("oracle_tol", 1e-3))


def _fiber_like(cfg: RunConfig, rep: Report, kind: str) -> None:
    spec, ncfg = cfg.system, cfg.numerics
    eps = cfg.study["eps"] if kind == "random" else 0.0
    zetas, base = cfg.zeta_grid(), cfg.base
    n = cfg.study["replicas"]
    tables = []
    for i, s in enumerate(rep.seeds):
        noise = _noise(cfg, s, eps if kind == "random" else None)
        t = fiber_table(spec, eps, noise, base, zetas, ncfg, kind=kind)
        tables.append(t)
        rep.tables[_suffix(i, n)] = _table_csv(t)
    diags = [d for t in tables for d in t.diagnostics]
    rep.results["l_values"] = [t.l_values.tolist() for t in tables]
    rep.results["diagnostics"] = diags
    rep.checks["contraction"] = _contraction_ok(diags, ncfg.slack)
    member = max(fiber_membership_residual(t) for t in tables)
    rep.results["base_membership_residual"] = member
    rep.checks["base_on_fiber"] = member <= cfg.study.get("fiber_tol", 1e-6)
    if len(zetas) >= 2:
        ests = [lipschitz_estimate(t) for t in tables]
        rep.results["lipschitz_estimate"] = max(e[0] for e in ests)
        rep.results["lipschitz_bound"] = ests[0][1]
        # the theoretical constant only applies to globally Lipschitz systems
        if not spec.local:
            rep.checks["lipschitz"] = all(e[2] for e in ests)
    if _is_motivating(cfg):
        x0, y0 = base
        if kind == "random":
            expected = MOTIVATING_ORACLES.fiber_fn(eps, zetas, x0, y0)
        else:
            expected = MOTIVATING_ORACLES.critical_fn(zetas, x0, y0)
        got = np.array([t.l_values for t in tables])
        _oracle_check(rep, kind, got, np.broadcast_to(expected, got.shape),
                      cfg.study.get("oracle_tol", 1e-3))


def _cmd_fiber(cfg, rep):
    _fiber_like(cfg, rep, "random")


def _cmd_critical(cfg, rep):
    _fiber_like(cfg, rep, "critical")


def _cmd_expand(cfg: RunConfig, rep: Report) -> None:
    spec, ncfg = cfg.system, cfg.numerics
    zetas, base = cfg.zeta_grid(), cfg.base
    eps = cfg.study.get("eps")
    n = cfg.study["replicas"]
    ns, nf = spec.n_slow, spec.n_fast
    L0, L1, LS = [], [], []
    for i, s in enumerate(rep.seeds):
        noise = _noise(cfg, s, eps, scaled=True) if eps is not None else _noise(cfg, s, None)
        l0s, l1s, lss = [], [], []
        for z in zetas:
            sol = solve_order1_systems(spec, noise, base, z, ncfg)
            l0s.append(sol.l0)
            l1s.append(lp_first_order(spec, noise, base, z, ncfg, solution=sol))
            if eps is not None:
                lss.append(lp_fiber_scaled(spec, eps, noise, base, z, ncfg)[0])
        header = ([f"zeta_{k}" for k in range(ns)] + [f"l0_{k}" for k in range(nf)]
                  + [f"l1_{k}" for k in range(nf)])
        rows = [list(z) + list(a) + list(b) for z, a, b in zip(zetas, l0s, l1s)]
        if eps is not None:
            header += [f"l_scaled_{k}" for k in range(nf)] + ["residual"]
            rows = [r + list(c) + [float(np.max(np.abs(c - (a + eps * b))))]
                    for r, a, b, c in zip(rows, l0s, l1s, lss)]
            LS.append(lss)
        rep.tables[_suffix(i, n)] = _csv(header, rows)
        L0.append(l0s)
        L1.append(l1s)
    L0, L1 = np.array(L0), np.array(L1)
    rep.results["l0"] = L0.tolist()
    rep.results["l1"] = L1.tolist()
    if eps is not None:
        LS = np.array(LS)
        resid = np.abs(LS - (L0 + eps * L1))
        rep.results["eps"] = eps
        rep.results["l_scaled"] = LS.tolist()
        rep.results["residual"] = resid.max(axis=2).tolist()
    if _is_motivating(cfg):
        x0, y0 = base
        tol = cfg.study.get("oracle_tol", 1e-3)
        _oracle_check(rep, "l0", L0, np.broadcast_to(MOTIVATING_ORACLES.critical_fn(zetas, x0, y0),
                                                    L0.shape), tol)
        _oracle_check(rep, "l1", L1, np.broadcast_to(MOTIVATING_ORACLES.first_order_fn(zetas, x0),
                                                    L1.shape), tol)
        if eps is not None:
            exp = oracle_motivating_order_residual(eps, zetas[:, 0], x0[0])
            _oracle_check(rep, "order_residual", resid[:, :, 0],
                          np.broadcast_to(exp, resid[:, :, 0].shape), tol)


def _cmd_rates(cfg: RunConfig, rep: Report) -> None:
    spec, ncfg, eps = cfg.system, cfg.numerics, cfg.study["eps"]
    base = cfg.base
    seed = rep.seeds[0]
    noise = _noise(cfg, seed, eps)
    pts = []
    for i, p in enumerate(cfg.study["points"]):
        x = cfg.slow_vector(p["x"], f"study.points[{i}].x")
        if "y" in p:
            y = cfg.fast_vector(p["y"], f"study.points[{i}].y")
        else:
            y = lp_fiber(spec, eps, noise, base, x, ncfg)[0]
        pts.append((x, y))
    rep.results["points"] = [[x.tolist(), y.tolist()] for x, y in pts]
    try:
        fit = backward_rate(spec, eps, noise, base, pts[0], pts[1], ncfg,
                            window=cfg.study.get("window", 10.0),
                            fiber_tol=cfg.study.get("fiber_tol", 1e-6))
    except NotOnFiberError as exc:
        rep.results["diagnostic"] = f"bound violation: {exc}"
        rep.checks["on_fiber"] = False
        return
    rep.checks["on_fiber"] = True
    rep.results.update(fit.summary())
    rep.checks["bound_constant"] = fit.bound_constant_ok
    rep.checks["slope"] = fit.slope_ok
    rep.tables[""] = _csv(["t", "log_distance"], zip(fit.times, fit.log_distances))


def _cmd_parallel(cfg: RunConfig, rep: Report) -> None:
    spec, ncfg, eps = cfg.system, cfg.numerics, cfg.study["eps"]
    zetas, base = cfg.zeta_grid(), cfg.base
    thr = cfg.study.get("threshold", 1e-3)
    per = []
    for s in rep.seeds:
        per.append(parallelism_check(spec, eps, _noise(cfg, s, eps), base, zetas, ncfg))
    devs = [p["deviation"] for p in per]
    rep.results.update({"threshold": thr, "deviation": devs, "max_deviation": max(devs),
                        "per_replica": per})
    rep.checks["parallelism"] = max(devs) < thr
    rep.tables[""] = _csv(["replica", "deviation", "y0_discrepancy"],
                          [(i, p["deviation"], p["y0_discrepancy"]) for i, p in enumerate(per)])


def _cmd_invariance(cfg: RunConfig, rep: Report) -> None:
    spec, ncfg, eps = cfg.system, cfg.numerics, cfg.study["eps"]
    zetas, base = cfg.zeta_grid(), cfg.base
    tau, thr = cfg.study["tau"], cfg.study.get("threshold", 1e-3)
    rows, resids = [], []
    for i, s in enumerate(rep.seeds):
        noise = _noise(cfg, s, eps, t_max=tau)
        for z in zetas:
            y = lp_fiber(spec, eps, noise, base, z, ncfg)[0]
            r = invariance_check(spec, eps, noise, base, (z, y), tau, ncfg)
            resids.append(r)
            rows.append([i] + list(z) + [r])
    rep.results.update({"tau": tau, "threshold": thr, "residuals": resids,
                        "max_residual": max(resids)})
    rep.checks["invariance"] = max(resids) < thr
    rep.tables[""] = _csv(["replica"] + [f"zeta_{k}" for k in range(spec.n_slow)] + ["residual"],
                          rows)


def _study(cfg: RunConfig, rep: Report, fn, default_band) -> None:
    st = cfg.study
    band = tuple(st.get("band", default_band))
    report = fn(cfg.system, cfg.base, cfg.zeta_grid(), st["eps_list"], st["replicas"], cfg.seed,
                cfg.numerics, workers=_workers(cfg), band=band)
    rep.seeds = list(report.seeds)
    rep.results.update(report.to_dict())
    rep.checks["order"] = report.order_ok
    rep.checks["halving_ratios"] = report.ratios_ok
    buf = io.StringIO()
    report.to_csv(buf)
    rep.tables[""] = buf.getvalue()
    if _is_motivating(cfg):
        x0 = cfg.base[0][0]
        z = cfg.zeta_grid()[:, 0]
        oracle = (oracle_motivating_convergence if report.kind == "convergence"
                  else oracle_motivating_order_residual)
        # max over zeta, matching the reported metric
        expected = [float(np.max(oracle(e, z, x0))) for e in st["eps_list"]]
        _oracle_check(rep, report.kind, report.metric, expected, st.get("oracle_tol", 1e-6))


def _cmd_study_convergence(cfg, rep):
    _study(cfg, rep, convergence_study, (0.7, 1.3))


def _cmd_study_order(cfg, rep):
    _study(cfg, rep, order_study, (1.7, 2.3))


def _cmd_noise_check(cfg: RunConfig, rep: Report) -> None:
    st = cfg.study
    res = check_eta_xi_law(cfg.system, st["eps"], st["replicas"], seed=cfg.seed,
                           t=st.get("t", 1.0))
    rep.seeds = [replica_seed(cfg.seed, i) for i in range(st["replicas"])]
    rep.results.update(res)
    rep.checks["law"] = res["passed"]
    rep.tables[""] = _csv(["mode", "distance", "stationary_std", "bound"],
                          [(m, d, s, b) for m, (d, s, b) in
                           enumerate(zip(res["distance"], res["stationary_std"], res["bound"]))])


_COMMANDS = {
    "check": _cmd_check, "manifold": _cmd_manifold, "fiber": _cmd_fiber,
    "critical": _cmd_critical, "expand": _cmd_expand, "rates": _cmd_rates,
    "parallel": _cmd_parallel, "invariance": _cmd_invariance,
    "study-convergence": _cmd_study_convergence, "study-order": _cmd_study_order,
    "noise-check": _cmd_noise_check,
}
assert set(_COMMANDS) == set(COMMANDS)


def execute(cfg: RunConfig) -> Report:
    """Run the pipeline for ``cfg.command``; nothing is written to disk.

    Raises
    ------
    HypothesisError
        The hypothesis gate fails for a solver command.
    NumericalError
        Divergence or non-finite states.
    """
    gate = validate_hypotheses(cfg.system)
    rep = Report(cfg, gate.to_dict())
    if cfg.command != "check" and gate.status == "fail":
        raise HypothesisError(f"hypothesis gate failed: {gate.notes}")
    if cfg.command not in ("study-convergence", "study-order", "noise-check"):
        rep.seeds = _seeds(cfg)
    _COMMANDS[cfg.command](cfg, rep)
    return rep


def report_document(rep: Report, timestamp: str | None = None) -> dict:
    """JSON-ready report; only ``timestamp`` varies between identical runs."""
    cfg = rep.cfg
    raw = dict(cfg.raw)
    if "workers" in raw.get("numerics", {}):
        raw["numerics"] = {k: v for k, v in raw["numerics"].items() if k != "workers"}
    return _jsonable({
        "command": cfg.command,
        "schema": 1,
        "config": raw,
        "config_hash": config_hash(cfg.raw),
        "seed": cfg.seed,
        "seeds": rep.seeds,
        "seed_rule": "splitmix64(seed xor replica_index)",
        "versions": {"slowfol": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "numerics": cfg.numerics.to_dict(),
        "gate": rep.gate,
        "results": rep.results,
        "checks": rep.checks,
        "passed": rep.passed,
        "timestamp": timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    })


def write_report(rep: Report, output_dir: str | Path) -> list[Path]:
    """Write the JSON report and CSV tables; returns the paths written.

    Raises
    ------
    OSError
        The output directory is not writable.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {out / f"{rep.stem}.json": json.dumps(report_document(rep), sort_keys=True, indent=2) + "\n"}
    for suffix, text in sorted(rep.tables.items()):
        files[out / f"{rep.stem}{suffix}.csv"] = text
    for path, text in files.items():
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
    return list(files)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slowfol", description="Slow foliations of stochastic "
                                "slow-fast systems: fibers and convergence studies.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML configuration file")
    p.add_argument("--output", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=_u64, default=None, help="64-bit seed, overrides the config")
    return p


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def run_command(argv=None) -> int:
    """Run the command named in ``argv`` and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = parse_config(args.config, args.command, seed=args.seed, output_dir=args.output)
        rep = execute(cfg)
    except ConfigError as exc:
        print(f"slowfol: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SlowfolError, ArithmeticError) as exc:
        print(f"slowfol: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        paths = write_report(rep, cfg.output_dir)
    except OSError as exc:
        print(f"slowfol: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for path in paths:
        print(path)
    failed = [k for k, ok in rep.checks.items() if not ok]
    if failed:
        print(f"slowfol: verification failed: {', '.join(failed)}", file=sys.stderr)
        if "diagnostic" in rep.results:
            print(f"slowfol: {rep.results['diagnostic']}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
