"""TOML run configuration: parsing and validation."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

import numpy as np

from .errors import ConfigError
from .examples import BUILTIN_SYSTEMS
from .lp import WeightedNormConfig
from .sysspec import SystemSpec, build_system, check_eps

SCHEMA_VERSION = 1
MAX_SEED = (1 << 64) - 1

COMMANDS = ("check", "manifold", "fiber", "critical", "expand", "rates", "parallel",
            "invariance", "study-convergence", "study-order", "noise-check")

_TOP_KEYS = {"schema", "seed", "system", "numerics", "study"}
_NUMERIC_KEYS = {"dt", "T", "tol", "max_iters", "tail_tol", "slack", "workers"}
_BUILTIN_KEYS = {
    "motivating": {"builtin", "box_radius", "sigma2"},
    "fhn": {"builtin", "n_slow", "n_fast", "n_grid", "sigma1", "sigma2"},
}
_STUDY_KEYS = {"eps", "eps_list", "x0", "y0", "zeta", "replicas", "tau", "points",
               "window", "threshold", "oracle_tol", "t", "band", "fiber_tol"}

# study keys each command needs
_REQUIRED = {
    "check": (),
    "manifold": ("eps", "zeta"),
    "fiber": ("eps", "x0", "y0", "zeta"),
    "critical": ("x0", "y0", "zeta"),
    "expand": ("x0", "y0", "zeta"),
    "rates": ("eps", "x0", "y0", "points"),
    "parallel": ("eps", "x0", "y0", "zeta"),
    "invariance": ("eps", "x0", "y0", "zeta", "tau"),
    "study-convergence": ("eps_list", "x0", "y0", "zeta"),
    "study-order": ("eps_list", "x0", "y0", "zeta"),
    "noise-check": ("eps",),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration of one command run."""

    command: str
    system: SystemSpec
    numerics: WeightedNormConfig
    study: dict
    seed: int
    output_dir: Path
    workers: int | None
    raw: dict = field(repr=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)

    def slow_vector(self, value, where: str) -> np.ndarray:
        return _vector(value, self.system.n_slow, where)

    def fast_vector(self, value, where: str) -> np.ndarray:
        return _vector(value, self.system.n_fast, where)

    def zeta_grid(self) -> np.ndarray:
        return np.array([self.slow_vector(z, f"study.zeta[{i}]")
                         for i, z in enumerate(self.study["zeta"])])

    @property
    def base(self):
        return (self.slow_vector(self.study["x0"], "study.x0"),
                self.fast_vector(self.study["y0"], "study.y0"))


def config_hash(raw: dict) -> str:
    """SHA-256 of the canonical JSON form of a configuration (workers excluded)."""
    data = copy.deepcopy(raw)
    data.get("numerics", {}).pop("workers", None)
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _vector(value, n: int, where: str) -> np.ndarray:
    """Scalars fill the first mode; lists must have length ``n``."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number or list")
    if isinstance(value, (int, float)):
        v = np.zeros(n)
        v[0] = float(value)
        return v
    if isinstance(value, list) and all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                       for x in value):
        if len(value) != n:
            raise ConfigError(f"{where}: expected {n} components, got {len(value)}")
        return np.asarray(value, dtype=float)
    raise ConfigError(f"{where}: expected a number or a list of {n} numbers")


def _number(d: dict, key: str, where: str, default=None, positive: bool = False):
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key}: expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{where}.{key}: must be positive, got {v!r}")
    return v


def _check_keys(d: dict, allowed: set, where: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(where + '.' + k for k in extra)}"
                          if where else f"unknown key(s) {', '.join(extra)}")


def _build_system(block: dict) -> SystemSpec:
    if not isinstance(block, dict):
        raise ConfigError("system: expected a table")
    name = block.get("builtin")
    if name is None:
        return build_system(block)
    if name not in BUILTIN_SYSTEMS:
        raise ConfigError(f"system.builtin: unknown system {name!r}; "
                          f"choose from {sorted(BUILTIN_SYSTEMS)}")
    _check_keys(block, _BUILTIN_KEYS[name], "system")
    if name == "motivating":
        kw = {}
        if "box_radius" in block:
            kw["box_radius"] = _number(block, "box_radius", "system", positive=True)
        if "sigma2" in block:
            kw["sigma2"] = _number(block, "sigma2", "system")
        return BUILTIN_SYSTEMS[name](**kw)
    kw = {}
    for key, dst in (("n_slow", "n_slow_modes"), ("n_fast", "n_fast_modes"), ("n_grid", "n_grid")):
        if key in block:
            v = block[key]
            if isinstance(v, bool) or not isinstance(v, int) or v < (0 if key == "n_grid" else 1):
                raise ConfigError(f"system.{key}: expected a positive integer, got {v!r}")
            kw[dst] = v
    for key in ("sigma1", "sigma2"):
        if key in block:
            kw[key] = _number(block, key, "system")
    return BUILTIN_SYSTEMS[name](**kw)


def _numerics(block: dict, spec: SystemSpec) -> tuple[WeightedNormConfig, int | None]:
    if not isinstance(block, dict):
        raise ConfigError("numerics: expected a table")
    _check_keys(block, _NUMERIC_KEYS, "numerics")
    dt = _number(block, "dt", "numerics", 1e-3, positive=True)
    tail = _number(block, "tail_tol", "numerics", 1e-6, positive=True)
    tol = _number(block, "tol", "numerics", 1e-10, positive=True)
    T = _number(block, "T", "numerics", None, positive=True)
    slack = _number(block, "slack", "numerics", 0.1)
    it = block.get("max_iters", 200)
    if isinstance(it, bool) or not isinstance(it, int) or it < 1:
        raise ConfigError(f"numerics.max_iters: expected a positive integer, got {it!r}")
    workers = block.get("workers")
    if workers is not None and (isinstance(workers, bool) or not isinstance(workers, int)
                                or workers < 1):
        raise ConfigError(f"numerics.workers: expected a positive integer, got {workers!r}")
    try:
        cfg = WeightedNormConfig.for_spec(spec, dt=dt, tail_tol=tail, tol=tol, max_iters=it,
                                          T=T, slack=slack)
    except ConfigError as exc:
        raise ConfigError(f"numerics: {exc}") from None
    return cfg, workers


def _study(block: dict, command: str, spec: SystemSpec) -> dict:
    if not isinstance(block, dict):
        raise ConfigError("study: expected a table")
    _check_keys(block, _STUDY_KEYS, "study")
    for key in _REQUIRED[command]:
        if key not in block:
            raise ConfigError(f"study.{key} is required for command {command!r}")
    study = dict(block)
    if "eps" in study:
        eps = _number(study, "eps", "study", positive=True)
        check_eps(spec, eps)
    if "eps_list" in study:
        el = study["eps_list"]
        if not isinstance(el, list) or len(el) < 2:
            raise ConfigError("study.eps_list: expected a list of at least two values")
        for i, e in enumerate(el):
            if isinstance(e, bool) or not isinstance(e, (int, float)) or not e > 0:
                raise ConfigError(f"study.eps_list[{i}]: expected a positive number")
            check_eps(spec, e)
        if any(el[k + 1] >= el[k] for k in range(len(el) - 1)):
            raise ConfigError("study.eps_list: must be strictly decreasing")
    if "zeta" in study:
        z = study["zeta"]
        if not isinstance(z, list) or not z:
            raise ConfigError("study.zeta: expected a nonempty list")
        for i, v in enumerate(z):
            _vector(v, spec.n_slow, f"study.zeta[{i}]")
    if "x0" in study:
        _vector(study["x0"], spec.n_slow, "study.x0")
    if "y0" in study:
        _vector(study["y0"], spec.n_fast, "study.y0")
    reps = study.get("replicas", 100 if command == "noise-check" else 1)
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        raise ConfigError(f"study.replicas: expected a positive integer, got {reps!r}")
    if command == "noise-check" and reps < 100:
        raise ConfigError("study.replicas: noise-check needs at least 100 replicas")
    study["replicas"] = reps
    for key in ("tau", "window", "threshold", "oracle_tol", "t", "fiber_tol"):
        if key in study:
            _number(study, key, "study", positive=True)
    if "points" in study:
        pts = study["points"]
        if not isinstance(pts, list) or len(pts) != 2:
            raise ConfigError("study.points: expected two points")
        for i, p in enumerate(pts):
            if not isinstance(p, dict) or "x" not in p:
                raise ConfigError(f"study.points[{i}]: expected a table with key x (and optional y)")
            _check_keys(p, {"x", "y"}, f"study.points[{i}]")
            _vector(p["x"], spec.n_slow, f"study.points[{i}].x")
            if "y" in p:
                _vector(p["y"], spec.n_fast, f"study.points[{i}].y")
    if "band" in study:
        b = study["band"]
        if not (isinstance(b, list) and len(b) == 2 and all(isinstance(v, (int, float)) for v in b)):
            raise ConfigError("study.band: expected [low, high]")
    return study


def load_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from None


def parse_config(path: str | Path, command: str = "check", seed: int | None = None,
                 output_dir: str | Path = ".") -> RunConfig:
    """Read and validate a TOML run configuration.

    Parameters
    ----------
    path : path-like
    command : str
        Subcommand; determines which study keys are required.
    seed : int, optional
        Overrides the ``seed`` key.
    output_dir : path-like

    Raises
    ------
    ConfigError
        Parse or validation failure; messages name the offending key.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    raw = load_toml(path)
    _check_keys(raw, _TOP_KEYS, "")
    schema = raw.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"schema: unsupported version {schema!r} (expected {SCHEMA_VERSION})")
    if seed is not None:
        raw["seed"] = seed
    if "seed" not in raw:
        raise ConfigError("seed: a 64-bit seed is required (key 'seed' or --seed)")
    s = raw["seed"]
    if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s <= MAX_SEED:
        raise ConfigError(f"seed: expected an integer in [0, 2^64), got {s!r}")
    if "system" not in raw:
        raise ConfigError("system: block is required")
    spec = _build_system(raw["system"])
    numerics, workers = _numerics(raw.get("numerics", {}), spec)
    study = _study(raw.get("study", {}), command, spec)
    return RunConfig(command, spec, numerics, study, int(s), Path(output_dir), workers, raw)
