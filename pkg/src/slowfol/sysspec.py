"""Slow-fast systems in diagonal spectral form and the hypothesis gate.

A system is

    dx = A x dt + f(x, y) dt + sigma1 dW1,
    dy = (1/eps) B y dt + (1/eps) g(x, y) dt + sigma2 / sqrt(eps) dW2,

with ``A`` and ``B`` diagonal in a common orthonormal basis. Nonlinearities
are sums of registry terms. In the ``"sine"`` basis coefficients are
expansion coefficients in the orthonormal sine basis sqrt(2/pi) sin(kx) of
L^2(0, pi), and terms are evaluated pseudo-spectrally on an interior grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, HypothesisError

#: Solvers refuse to run when the contraction constant reaches this level.
RHO_GUARD = 0.95


@dataclass(frozen=True)
class SpectralOperator:
    """Diagonal linear operator given by its eigenvalues (units 1/time)."""

    eigenvalues: tuple[float, ...]

    def __post_init__(self):
        ev = tuple(float(v) for v in self.eigenvalues)
        if not ev:
            raise ConfigError("operator needs at least one eigenvalue")
        if not all(math.isfinite(v) for v in ev):
            raise ConfigError("operator eigenvalues must be finite")
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def space_dim(self) -> int:
        return len(self.eigenvalues)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.eigenvalues)

    def semigroup(self, t) -> np.ndarray:
        """Return ``exp(lambda_k t)`` with shape ``t.shape + (dim,)``."""
        return np.exp(np.multiply.outer(np.asarray(t, dtype=float), self.array))


# ---------------------------------------------------------------- registry

@dataclass(frozen=True)
class _TermKind:
    phi: Callable[[float, np.ndarray], np.ndarray]
    dphi: Callable[[float, np.ndarray], np.ndarray]
    lipschitz: Callable[[float], float] | None  # None: no global constant
    sup: Callable[[float], float] | None  # None: unbounded
    default_arg: str


def _quad_phi(c, u):
    return c * u * u


_TERM_KINDS: dict[str, _TermKind] = {
    "scaled-sine": _TermKind(
        lambda c, u: c * np.sin(u), lambda c, u: c * np.cos(u),
        abs, abs, "y"),
    # shifted by -c so that the term vanishes at the origin
    "scaled-cosine": _TermKind(
        lambda c, u: c * (np.cos(u) - 1.0), lambda c, u: -c * np.sin(u),
        abs, lambda c: 2.0 * abs(c), "x"),
    "quadratic-slow": _TermKind(
        _quad_phi, lambda c, u: 2.0 * c * u, None, None, "x"),
    "linear": _TermKind(
        lambda c, u: c * u, lambda c, u: c * np.ones_like(u),
        abs, None, "y"),
}

NONLINEARITY_KINDS = ("zero", *_TERM_KINDS, "user-composite")


@dataclass(frozen=True)
class Term:
    """One registry term ``coeff * phi(arg)`` with ``arg`` in {"x", "y"}."""

    kind: str
    coeff: float
    arg: str

    @property
    def spec(self) -> _TermKind:
        return _TERM_KINDS[self.kind]


@dataclass(frozen=True)
class Nonlinearity:
    """Registry nonlinearity.

    Attributes
    ----------
    kind : str
        Registry identifier.
    terms : tuple of Term
        Summands; empty for ``"zero"``.
    declared_lipschitz : float
        The constant K entering the gap condition.
    bound : float or None
        Pointwise sup of the nonlinearity when bounded, else None.
    box_radius : float or None
        Validity radius for kinds with only a local Lipschitz constant.
    """

    kind: str
    terms: tuple[Term, ...] = ()
    declared_lipschitz: float = 0.0
    bound: float | None = 0.0
    box_radius: float | None = None

    @property
    def bounded_flag(self) -> bool:
        return self.bound is not None

    @property
    def local(self) -> bool:
        return any(t.spec.lipschitz is None for t in self.terms)

    @property
    def params(self) -> tuple[float, ...]:
        return tuple(t.coeff for t in self.terms)


def _finite(value, where: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a real number, got {value!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{where}: non-finite coefficient {value!r}")
    return v


def _parse_term(desc: Mapping[str, Any], where: str) -> Term:
    allowed = {"kind", "coeff", "arg", "lipschitz", "box_radius"}
    extra = set(desc) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    kind = desc.get("kind")
    if kind not in _TERM_KINDS:
        raise ConfigError(f"{where}.kind: unknown nonlinearity kind {kind!r}")
    coeff = _finite(desc.get("coeff", 1.0), f"{where}.coeff")
    arg = desc.get("arg", _TERM_KINDS[kind].default_arg)
    if arg not in ("x", "y"):
        raise ConfigError(f"{where}.arg: must be 'x' or 'y', got {arg!r}")
    return Term(kind, coeff, arg)


def make_nonlinearity(desc: Mapping[str, Any] | str | None, where: str = "nonlinearity") -> Nonlinearity:
    """Build a registry nonlinearity from a key-value description.

    Examples of descriptions::

        "zero"
        {"kind": "scaled-sine", "coeff": 0.25, "arg": "y"}
        {"kind": "quadratic-slow", "coeff": 1.0, "box_radius": 0.125}
        {"kind": "user-composite", "terms": [{...}, {...}]}
    """
    if desc is None or desc == "zero":
        return Nonlinearity("zero")
    if isinstance(desc, str):
        desc = {"kind": desc}
    if not isinstance(desc, Mapping):
        raise ConfigError(f"{where}: expected a table, got {type(desc).__name__}")
    kind = desc.get("kind")
    if kind not in NONLINEARITY_KINDS:
        raise ConfigError(f"{where}.kind: unknown nonlinearity kind {kind!r}")
    if kind == "zero":
        extra = set(desc) - {"kind"}
        if extra:
            raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
        return Nonlinearity("zero")
    if kind == "user-composite":
        extra = set(desc) - {"kind", "terms", "lipschitz", "box_radius"}
        if extra:
            raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
        raw = desc.get("terms")
        if not raw:
            raise ConfigError(f"{where}.terms: composite needs at least one term")
        terms = tuple(_parse_term(t, f"{where}.terms[{i}]") for i, t in enumerate(raw))
    else:
        terms = (_parse_term({k: v for k, v in desc.items()
                              if k not in ("lipschitz", "box_radius")}, where),)

    radius = desc.get("box_radius")
    if radius is not None:
        radius = _finite(radius, f"{where}.box_radius")
        if radius <= 0:
            raise ConfigError(f"{where}.box_radius must be positive")
    local = any(t.spec.lipschitz is None for t in terms)
    if local and radius is None:
        raise ConfigError(f"{where}: kind with local Lipschitz constant needs box_radius")

    lip = 0.0
    for t in terms:
        if t.spec.lipschitz is None:
            # |c u^2 - c v^2| <= 2|c| R |u - v| on the box |u|, |v| <= R
            lip += 2.0 * abs(t.coeff) * radius
        else:
            lip += t.spec.lipschitz(t.coeff)
    if "lipschitz" in desc:
        lip = _finite(desc["lipschitz"], f"{where}.lipschitz")
        if lip < 0:
            raise ConfigError(f"{where}.lipschitz must be nonnegative")

    if all(t.spec.sup is not None for t in terms):
        bound = float(sum(t.spec.sup(t.coeff) for t in terms))
    else:
        bound = None
    return Nonlinearity(kind, terms, lip, bound, radius)


# ------------------------------------------------------------------ bases

@dataclass(frozen=True)
class SineTransform:
    """Coefficient/nodal maps for the orthonormal sine basis on (0, pi).

    Nodes are x_j = j pi / (M + 1), j = 1..M, and the type-I discrete sine
    matrix is orthogonal, so the coefficient-to-node-to-coefficient round
    trip is exact and pointwise Lipschitz bounds carry over to the
    coefficient Euclidean norm.
    """

    n_modes: int
    n_grid: int

    def __post_init__(self):
        if self.n_grid < self.n_modes:
            raise ConfigError("sine grid must have at least as many nodes as modes")

    @property
    def _matrix(self) -> np.ndarray:
        m = self.n_grid
        j = np.arange(1, m + 1)[:, None]
        k = np.arange(1, self.n_modes + 1)[None, :]
        return np.sqrt(2.0 / (m + 1)) * np.sin(np.pi * j * k / (m + 1))

    @property
    def scale(self) -> float:
        return math.sqrt((self.n_grid + 1) / math.pi)

    @property
    def nodes(self) -> np.ndarray:
        return np.pi * np.arange(1, self.n_grid + 1) / (self.n_grid + 1)


# ------------------------------------------------------------------ system

@dataclass(frozen=True)
class SystemSpec:
    """A slow-fast system ready for the solvers.

    Attributes
    ----------
    slow_op, fast_op : SpectralOperator
        Diagonal operators A and B.
    f, g : Nonlinearity
        Slow and fast nonlinearities.
    sigma1, sigma2 : float
        Noise intensities.
    gamma_s, gamma_f : float
        Spectral rates with gamma_s < 0 < gamma_f.
    basis : {"pointwise", "sine"}
        How coefficients map to the points where terms are evaluated.
    n_grid : int
        Pseudo-spectral grid size (sine basis only).
    """

    slow_op: SpectralOperator
    fast_op: SpectralOperator
    f: Nonlinearity
    g: Nonlinearity
    sigma1: float
    sigma2: float
    gamma_s: float
    gamma_f: float
    basis: str = "pointwise"
    n_grid: int = 0
    name: str = "custom"
    _maps: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.gamma_s < 0 < self.gamma_f):
            raise HypothesisError(
                f"rates must satisfy gamma_s < 0 < gamma_f, got {self.gamma_s}, {self.gamma_f}")
        bad = [a for a in self.slow_op.eigenvalues if a < -self.gamma_s]
        if bad:
            raise HypothesisError(f"slow eigenvalues {bad} violate a >= -gamma_s = {-self.gamma_s}")
        bad = [b for b in self.fast_op.eigenvalues if b > -self.gamma_f]
        if bad:
            raise HypothesisError(f"fast eigenvalues {bad} violate b <= -gamma_f = {-self.gamma_f}")
        for s, nm in ((self.sigma1, "sigma1"), (self.sigma2, "sigma2")):
            if not (math.isfinite(s) and s >= 0):
                raise ConfigError(f"{nm} must be finite and nonnegative")
        dims = {"x": self.n_slow, "y": self.n_fast}
        if self.basis == "pointwise":
            for nl, target in ((self.f, self.n_slow), (self.g, self.n_fast)):
                for t in nl.terms:
                    if dims[t.arg] != target:
                        raise ConfigError(
                            f"dimension mismatch: term on {t.arg} (dim {dims[t.arg]}) "
                            f"feeds a space of dim {target} in pointwise basis")
            maps = None
        elif self.basis == "sine":
            n_grid = self.n_grid or 4 * max(self.n_slow, self.n_fast)
            object.__setattr__(self, "n_grid", int(n_grid))
            maps = {}
            for key, n in (("x", self.n_slow), ("y", self.n_fast)):
                tr = SineTransform(n, self.n_grid)
                mat = tr._matrix
                maps[key] = (tr.scale * mat.T, mat / tr.scale)  # to nodes, from nodes
        else:
            raise ConfigError(f"unknown basis {self.basis!r}")
        object.__setattr__(self, "_maps", maps)

    # -- derived constants
    @property
    def n_slow(self) -> int:
        return self.slow_op.space_dim

    @property
    def n_fast(self) -> int:
        return self.fast_op.space_dim

    @property
    def a(self) -> np.ndarray:
        return self.slow_op.array

    @property
    def b(self) -> np.ndarray:
        return self.fast_op.array

    @property
    def lipschitz(self) -> float:
        return max(self.f.declared_lipschitz, self.g.declared_lipschitz)

    @property
    def beta(self) -> float:
        return -self.gamma_s / 2.0

    @property
    def gap_bound(self) -> float:
        return gap_bound(self.gamma_s, self.gamma_f)

    @property
    def local(self) -> bool:
        return self.f.local or self.g.local

    def f_bound_norm(self) -> float | None:
        """Bound on the norm of f in the slow space, or None if unbounded."""
        if self.f.bound is None:
            return None
        measure = math.pi if self.basis == "sine" else float(self.n_slow)
        return self.f.bound * math.sqrt(measure)

    # -- evaluation
    def _nodes(self, v: np.ndarray, arg: str) -> np.ndarray:
        if self._maps is None:
            return v
        return v @ self._maps[arg][0]

    def _project(self, u: np.ndarray, target: str) -> np.ndarray:
        if self._maps is None:
            return u
        return u @ self._maps[target][1]

    def _evaluate(self, nl: Nonlinearity, target: str, x, y, dx=None, dy=None,
                  derivative: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        lead = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        n_target = self.n_slow if target == "x" else self.n_fast
        acc = None
        cache: dict[str, np.ndarray] = {}
        for t in nl.terms:
            if t.arg not in cache:
                cache[t.arg] = self._nodes(x if t.arg == "x" else y, t.arg)
            u = cache[t.arg]
            if derivative:
                d = dx if t.arg == "x" else dy
                if d is None:
                    continue
                val = t.spec.dphi(t.coeff, u) * self._nodes(np.asarray(d, dtype=float), t.arg)
            else:
                val = t.spec.phi(t.coeff, u)
            acc = val if acc is None else acc + val
        if acc is None:
            return np.zeros(lead + (n_target,))
        out = self._project(acc, target)
        return np.broadcast_to(out, lead + (n_target,)).copy() if out.shape[:-1] != lead else out

    def F(self, x, y) -> np.ndarray:
        """Slow nonlinearity f(x, y); leading axes broadcast."""
        return self._evaluate(self.f, "x", x, y)

    def G(self, x, y) -> np.ndarray:
        """Fast nonlinearity g(x, y); leading axes broadcast."""
        return self._evaluate(self.g, "y", x, y)

    def dF(self, x, y, dx=None, dy=None) -> np.ndarray:
        """Directional derivative f_x(x, y) dx + f_y(x, y) dy."""
        return self._evaluate(self.f, "x", x, y, dx, dy, derivative=True)

    def dG(self, x, y, dx=None, dy=None) -> np.ndarray:
        """Directional derivative g_x(x, y) dx + g_y(x, y) dy."""
        return self._evaluate(self.g, "y", x, y, dx, dy, derivative=True)

    def g_depends_on_y(self) -> bool:
        return any(t.arg == "y" for t in self.g.terms)


# ------------------------------------------------------------ construction

_SYSTEM_KEYS = {
    "name", "slow_eigenvalues", "fast_eigenvalues", "sigma1", "sigma2",
    "gamma_s", "gamma_f", "basis", "n_grid", "f", "g",
}


def _eigs(value, where: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        value = [value]
    if not isinstance(value, Sequence) or isinstance(value, str) or len(value) == 0:
        raise ConfigError(f"{where}: expected a nonempty list of eigenvalues")
    return tuple(_finite(v, f"{where}[{i}]") for i, v in enumerate(value))


def build_system(config: Mapping[str, Any]) -> SystemSpec:
    """Build and check a :class:`SystemSpec` from a parsed description.

    Parameters
    ----------
    config : mapping
        Keys ``slow_eigenvalues``, ``fast_eigenvalues`` (lists), ``f``, ``g``
        (nonlinearity descriptions), ``sigma1``, ``sigma2`` and optionally
        ``gamma_s``, ``gamma_f`` (derived from the spectra when absent),
        ``basis`` and ``n_grid``.

    Raises
    ------
    ConfigError
        Unknown keys or kinds, or malformed entries.
    HypothesisError
        Eigenvalues violate the rate bounds.
    """
    extra = set(config) - _SYSTEM_KEYS
    if extra:
        raise ConfigError(f"system: unknown keys {sorted(extra)}")
    for key in ("slow_eigenvalues", "fast_eigenvalues"):
        if key not in config:
            raise ConfigError(f"system.{key} is required")
    a = _eigs(config["slow_eigenvalues"], "system.slow_eigenvalues")
    b = _eigs(config["fast_eigenvalues"], "system.fast_eigenvalues")
    if any(v >= 0 for v in b):
        raise HypothesisError(f"system.fast_eigenvalues: all must be negative, got {list(b)}")
    if any(v <= 0 for v in a):
        raise HypothesisError(f"system.slow_eigenvalues: all must be positive, got {list(a)}")
    gamma_s = _finite(config.get("gamma_s", -min(a)), "system.gamma_s")
    gamma_f = _finite(config.get("gamma_f", -max(b)), "system.gamma_f")
    n_grid = config.get("n_grid", 0)
    if not isinstance(n_grid, int) or n_grid < 0:
        raise ConfigError("system.n_grid must be a nonnegative integer")
    return SystemSpec(
        slow_op=SpectralOperator(a),
        fast_op=SpectralOperator(b),
        f=make_nonlinearity(config.get("f"), "system.f"),
        g=make_nonlinearity(config.get("g"), "system.g"),
        sigma1=_finite(config.get("sigma1", 0.0), "system.sigma1"),
        sigma2=_finite(config.get("sigma2", 0.0), "system.sigma2"),
        gamma_s=gamma_s,
        gamma_f=gamma_f,
        basis=config.get("basis", "pointwise"),
        n_grid=n_grid,
        name=str(config.get("name", "custom")),
    )


# -------------------------------------------------------------------- gate

def gap_bound(gamma_s: float, gamma_f: float) -> float:
    """Largest admissible Lipschitz constant, (-gs gf) / (2 gf - gs)."""
    return (-gamma_s * gamma_f) / (2.0 * gamma_f - gamma_s)


def rho_value(K: float, gamma_s: float, gamma_f: float, eps: float) -> float:
    """Contraction constant K/(-beta - gs) + K/(gf + eps beta), beta = -gs/2."""
    beta = -gamma_s / 2.0
    return K / (-beta - gamma_s) + K / (gamma_f + eps * beta)


def rho(spec: SystemSpec, eps: float) -> float:
    """Contraction constant of the fiber operator at scale ``eps``.

    Raises
    ------
    ConfigError
        If ``eps <= 0``.
    """
    if not eps > 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    return rho_value(spec.lipschitz, spec.gamma_s, spec.gamma_f, eps)


def rho_limit(spec: SystemSpec) -> float:
    """Limit of :func:`rho` as eps -> 0+ (its supremum, rho decreases in eps)."""
    return rho_value(spec.lipschitz, spec.gamma_s, spec.gamma_f, 0.0)


def rho_critical(spec: SystemSpec) -> float:
    """Contraction constant of the critical fiber operator, K/(gf + beta)."""
    return spec.lipschitz / (spec.gamma_f + spec.beta)


def eps0(spec: SystemSpec, threshold: float = RHO_GUARD) -> float:
    """Upper end of the admissible interval (0, eps0).

    Because rho decreases in eps, the interval on which rho stays below the
    threshold for every smaller eps is either all of (0, inf) or empty.
    """
    return math.inf if rho_limit(spec) < threshold else 0.0


def check_eps(spec: SystemSpec, eps: float, threshold: float = RHO_GUARD) -> float:
    """Return rho(spec, eps) or raise when eps is outside (0, eps0)."""
    r = rho(spec, eps)
    if not eps < eps0(spec, threshold):
        raise HypothesisError(
            f"eps = {eps} exceeds eps0 = {eps0(spec, threshold)}: "
            f"rho -> {rho_limit(spec):.6g} >= {threshold} as eps -> 0 "
            f"(rho({eps}) = {r:.6g})")
    return r


@dataclass(frozen=True)
class HypothesisReport:
    """Outcome of :func:`validate_hypotheses`."""

    h1_ok: bool
    h2_ok: bool
    h3_ok: bool
    gap_bound: float
    beta: float
    lipschitz: float
    measured_lipschitz_f: float
    measured_lipschitz_g: float
    local: bool
    notes: str

    @property
    def passed(self) -> bool:
        return self.h1_ok and self.h2_ok and self.h3_ok

    @property
    def status(self) -> str:
        if not self.passed:
            return "fail"
        return "warning" if self.local else "pass"

    def to_dict(self) -> dict:
        return {
            "h1_ok": self.h1_ok, "h2_ok": self.h2_ok, "h3_ok": self.h3_ok,
            "gap_bound": self.gap_bound, "beta": self.beta,
            "lipschitz": self.lipschitz,
            "measured_lipschitz_f": self.measured_lipschitz_f,
            "measured_lipschitz_g": self.measured_lipschitz_g,
            "local": self.local, "status": self.status, "notes": self.notes,
        }


def measure_lipschitz(spec: SystemSpec, which: str, radius: float,
                      n_pairs: int = 10_000, seed: int = 0) -> float:
    """Largest sampled difference quotient of f or g on a box.

    Half the pairs are independent uniform points in the box, half are
    small perturbations, so both global and local slopes are probed.
    """
    rng = np.random.default_rng(seed)
    ns, nf = spec.n_slow, spec.n_fast
    x1 = rng.uniform(-radius, radius, (n_pairs, ns))
    y1 = rng.uniform(-radius, radius, (n_pairs, nf))
    x2 = rng.uniform(-radius, radius, (n_pairs, ns))
    y2 = rng.uniform(-radius, radius, (n_pairs, nf))
    half = n_pairs // 2
    h = 1e-3 * radius
    x2[:half] = np.clip(x1[:half] + rng.uniform(-h, h, (half, ns)), -radius, radius)
    y2[:half] = np.clip(y1[:half] + rng.uniform(-h, h, (half, nf)), -radius, radius)
    fn = spec.F if which == "f" else spec.G
    num = np.linalg.norm(fn(x1, y1) - fn(x2, y2), axis=-1)
    den = np.linalg.norm(x1 - x2, axis=-1) + np.linalg.norm(y1 - y2, axis=-1)
    mask = den > 0
    return float(np.max(num[mask] / den[mask])) if mask.any() else 0.0


def validate_hypotheses(spec: SystemSpec, n_pairs: int = 10_000, seed: int = 0,
                        rel_tol: float = 1e-9) -> HypothesisReport:
    """Run the hypothesis gate.

    Checks the spectral rate bounds and that f and g vanish at the origin.
    Sampled Lipschitz quotients are compared with the declared constants
    before the gap condition K < gap_bound is tested. Kinds with only local Lipschitz constants are
    sampled on their validity box and produce a warning.
    """
    notes = []
    h1 = (spec.gamma_s < 0 < spec.gamma_f
          and all(a >= -spec.gamma_s for a in spec.slow_op.eigenvalues)
          and all(b <= -spec.gamma_f for b in spec.fast_op.eigenvalues))
    if not h1:
        notes.append("spectral rate bounds violated")

    zx, zy = np.zeros(spec.n_slow), np.zeros(spec.n_fast)
    h2 = bool(np.allclose(spec.F(zx, zy), 0.0, atol=1e-14)
              and np.allclose(spec.G(zx, zy), 0.0, atol=1e-14))
    if not h2:
        notes.append("nonlinearity does not vanish at the origin")
    measured = {}
    for which, nl in (("f", spec.f), ("g", spec.g)):
        radius = nl.box_radius if nl.box_radius is not None else 3.0
        m = measure_lipschitz(spec, which, radius, n_pairs, seed)
        measured[which] = m
        if m > nl.declared_lipschitz * (1.0 + rel_tol) + rel_tol:
            h2 = False
            notes.append(f"{which}: sampled Lipschitz {m:.6g} exceeds declared "
                         f"{nl.declared_lipschitz:.6g}")
        if nl.local:
            notes.append(f"warning: {which} is only locally Lipschitz; constant "
                         f"{nl.declared_lipschitz:.6g} holds on the box of radius {radius:g}")

    gb = spec.gap_bound
    K = spec.lipschitz
    h3 = K < gb
    if not h3:
        notes.append(f"gap condition fails: K = {K:.6g} >= {gb:.6g}")
    return HypothesisReport(h1, h2, h3, gb, spec.beta, K, measured["f"], measured["g"],
                            spec.local, "; ".join(notes))
