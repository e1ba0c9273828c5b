"""Two-sided Wiener paths and the stationary OU processes they drive.

Wiener increments are drawn per mode from counter-style streams: the
increment on ``[t_j, t_{j+1}]`` is the ``|j|``-th normal of a stream keyed
by ``(seed, stream, side, mode)``, so extending a grid never changes the
increments already present and paths of different dimensions agree on
their common modes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, GridError
from .sysspec import SystemSpec

MASK64 = (1 << 64) - 1
_ALIGN_TOL = 1e-9

# stream tags
W_SLOW, W_FAST = 1, 2
_POS, _NEG, _INIT_DELTA, _INIT_XI, _INIT_ETA = 0, 1, 2, 3, 4


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x`` (64-bit arithmetic)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replica_seed(base_seed: int, index: int) -> int:
    """Seed of replica ``index``: SplitMix64(base_seed XOR index)."""
    return splitmix64((int(base_seed) ^ int(index)) & MASK64)


def _normals(seed: int, *tags: int, size: int) -> np.ndarray:
    ss = np.random.SeedSequence([int(seed) & MASK64, *tags])
    return np.random.Generator(np.random.PCG64(ss)).standard_normal(size)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_j = j dt`` for ``j = -n_neg .. n_pos``; contains 0."""

    dt: float
    n_neg: int
    n_pos: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise GridError(f"dt must be positive, got {self.dt}")
        if self.n_neg < 0 or self.n_pos < 0:
            raise GridError("grid must contain 0")

    @classmethod
    def from_bounds(cls, t_min: float, t_max: float, dt: float) -> "TimeGrid":
        """Grid on ``[t_min, t_max]``; both ends must be multiples of dt."""
        if t_min > 0 or t_max < 0:
            raise GridError(f"grid [{t_min}, {t_max}] must contain 0")
        n_neg = round(-t_min / dt)
        n_pos = round(t_max / dt)
        for n, t in ((n_neg, -t_min), (n_pos, t_max)):
            if abs(n * dt - t) > _ALIGN_TOL * max(1.0, abs(t)):
                raise GridError(f"bound {t} is not a multiple of dt = {dt}")
        return cls(float(dt), int(n_neg), int(n_pos))

    @property
    def t_min(self) -> float:
        return -self.n_neg * self.dt

    @property
    def t_max(self) -> float:
        return self.n_pos * self.dt

    @property
    def n_points(self) -> int:
        return self.n_neg + self.n_pos + 1

    @property
    def zero_index(self) -> int:
        return self.n_neg

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.n_points) - self.n_neg) * self.dt

    def index_of(self, t) -> np.ndarray | int:
        """Grid index of each time in ``t``; raises if off-grid or outside."""
        t = np.asarray(t, dtype=float)
        pos = t / self.dt
        k = np.rint(pos)
        if np.any(np.abs(pos - k) > 1e-6):
            raise GridError("times are not aligned with the grid")
        idx = k.astype(np.int64) + self.n_neg
        if np.any(idx < 0) or np.any(idx >= self.n_points):
            raise GridError(f"times outside grid support [{self.t_min}, {self.t_max}]")
        return int(idx) if idx.ndim == 0 else idx

    def shifted(self, tau: float) -> "TimeGrid":
        """Grid of ``s`` with ``s + tau`` on this grid."""
        k = self._steps(tau)
        if not -self.n_neg <= k <= self.n_pos:
            raise GridError(f"shift {tau} exceeds grid support [{self.t_min}, {self.t_max}]")
        return TimeGrid(self.dt, self.n_neg + k, self.n_pos - k)

    def _steps(self, tau: float) -> int:
        k = round(tau / self.dt)
        if abs(k * self.dt - tau) > _ALIGN_TOL * max(1.0, abs(tau)):
            raise GridError(f"shift {tau} is not aligned with dt = {self.dt}")
        return int(k)


@dataclass(frozen=True)
class WienerPath:
    """Two-sided Wiener path with ``values[zero_index] = 0``."""

    grid: TimeGrid
    dim: int
    values: np.ndarray
    seed: int
    stream: int = W_FAST

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def normals(self) -> np.ndarray:
        """Standardised increments ``N_j = dW_j / sqrt(dt)``."""
        return self.increments() / math.sqrt(self.grid.dt)

    def init_normals(self, tag: int) -> np.ndarray:
        """One auxiliary standard normal per mode, keyed by ``tag``."""
        return np.array([_normals(self.seed, self.stream, tag, m, size=1)[0]
                         for m in range(self.dim)])

    def at(self, t) -> np.ndarray:
        return self.values[self.grid.index_of(t)]


def sample_wiener(seed: int, grid: TimeGrid, dim: int, stream: int = W_FAST) -> WienerPath:
    """Sample a two-sided Wiener path on ``grid``.

    Parameters
    ----------
    seed : int
        64-bit seed.
    grid : TimeGrid
    dim : int
        Number of independent modes.
    stream : int
        Distinguishes the slow and fast driving processes.
    """
    if dim < 1:
        raise ConfigError("dim must be positive")
    sd = math.sqrt(grid.dt)
    vals = np.zeros((grid.n_points, dim))
    z = grid.zero_index
    for m in range(dim):
        if grid.n_pos:
            inc = sd * _normals(seed, stream, _POS, m, size=grid.n_pos)
            vals[z + 1:, m] = np.cumsum(inc)
        if grid.n_neg:
            inc = sd * _normals(seed, stream, _NEG, m, size=grid.n_neg)
            # increment j covers [-(j+1) dt, -j dt]
            vals[:z, m] = -np.cumsum(inc)[::-1]
    return WienerPath(grid, dim, vals, int(seed) & MASK64, stream)


def shift_path(path: WienerPath, tau: float) -> WienerPath:
    """Shift flow: ``path'(s) = path(s + tau) - path(tau)``."""
    grid = path.grid.shifted(tau)
    k = path.grid._steps(tau)
    vals = path.values - path.values[path.grid.zero_index + k]
    return replace(path, grid=grid, values=vals)


# ---------------------------------------------------------------- OU paths

@dataclass(frozen=True)
class OUPath:
    """Stationary Ornstein-Uhlenbeck path sampled on a grid.

    ``kind`` is ``"delta"`` (slow, anchored on future noise), ``"xi"`` (fast
    unit-scale) or ``"eta_eps"`` (fast with rate b/eps).
    """

    grid: TimeGrid
    dim: int
    values: np.ndarray
    kind: str
    eps: float | None = None

    def at(self, t) -> np.ndarray:
        """Values at grid-aligned times ``t`` (any stride)."""
        return self.values[self.grid.index_of(t)]

    def shifted(self, tau: float) -> "OUPath":
        """Path of the shifted noise: ``s -> path(s + tau)``."""
        return replace(self, grid=self.grid.shifted(tau))

    def to_csv(self, fh) -> None:
        """Write ``t, mode_0, ...`` rows."""
        header = "t," + ",".join(f"mode_{m}" for m in range(self.dim))
        data = np.column_stack([self.grid.times, self.values])
        np.savetxt(fh, data, delimiter=",", header=header, comments="", fmt="%.17g")


def _ar1(c: float, u: np.ndarray) -> np.ndarray:
    return lfilter([1.0], [1.0, -c], u)


def _ou_forward(rates, sigma, w: WienerPath, init_tag: int, kind: str, eps=None,
                intensity_scale: float = 1.0) -> OUPath:
    dt = w.grid.dt
    nrm = w.normals()
    z0 = w.init_normals(init_tag)
    out = np.empty_like(w.values)
    for m, lam in enumerate(rates):
        c = math.exp(lam * dt)
        q = sigma * intensity_scale * math.sqrt(math.expm1(2.0 * lam * dt) / (2.0 * lam))
        std = sigma * intensity_scale / math.sqrt(-2.0 * lam)
        u = np.empty(w.grid.n_points)
        u[0] = std * z0[m]
        u[1:] = q * nrm[:, m]
        out[:, m] = _ar1(c, u)
    return OUPath(w.grid, w.dim, out, kind, eps)


def ou_xi(spec: SystemSpec, wiener_fast: WienerPath) -> OUPath:
    """Stationary solution of ``d xi = B xi dt + sigma2 dW2``.

    Exact AR(1) per mode from the Wiener increments, started at ``t_min``
    from the stationary law N(0, sigma2^2 / (2|b|)).
    """
    b = spec.b
    if np.any(b >= 0):
        raise ConfigError("fast eigenvalues must be negative")
    if wiener_fast.dim != spec.n_fast:
        raise GridError("fast Wiener path dimension mismatch")
    return _ou_forward(b, spec.sigma2, wiener_fast, _INIT_XI, "xi")


def ou_eta(spec: SystemSpec, eps: float, wiener_fast: WienerPath) -> OUPath:
    """Stationary solution with rate b/eps and intensity sigma2/sqrt(eps).

    The stationary variance sigma2^2/(2|b|) does not depend on eps.
    """
    if not eps > 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    b = spec.b
    if np.any(b >= 0):
        raise ConfigError("fast eigenvalues must be negative")
    if wiener_fast.dim != spec.n_fast:
        raise GridError("fast Wiener path dimension mismatch")
    return _ou_forward(b / eps, spec.sigma2, wiener_fast, _INIT_ETA, "eta_eps", eps,
                       intensity_scale=1.0 / math.sqrt(eps))


def ou_delta(spec: SystemSpec, wiener_slow: WienerPath) -> OUPath:
    """Stationary solution of ``d delta = A delta dt + sigma1 dW1``.

    Realises ``delta(t) = -sigma1 int_t^inf e^{a(t-s)} dW(s)`` through the
    backward recursion ``delta_j = e^{-a dt} delta_{j+1} - q N_j`` started
    from the stationary law at ``t_max``.
    """
    a = spec.a
    if np.any(a <= 0):
        raise ConfigError("slow eigenvalues must be positive")
    w = wiener_slow
    if w.dim != spec.n_slow:
        raise GridError("slow Wiener path dimension mismatch")
    dt = w.grid.dt
    nrm = w.normals()
    z0 = w.init_normals(_INIT_DELTA)
    out = np.empty_like(w.values)
    for m, lam in enumerate(a):
        c = math.exp(-lam * dt)
        q = spec.sigma1 * math.sqrt(-math.expm1(-2.0 * lam * dt) / (2.0 * lam))
        u = np.empty(w.grid.n_points)
        u[0] = spec.sigma1 / math.sqrt(2.0 * lam) * z0[m]
        u[1:] = -q * nrm[::-1, m]
        out[:, m] = _ar1(c, u)[::-1]
    return OUPath(w.grid, w.dim, out, "delta")


# ------------------------------------------------------------ noise bundle

@dataclass(frozen=True)
class NoisePaths:
    """The OU paths of one noise realisation.

    ``delta`` lives on its own grid (finer for the time-rescaled system);
    ``xi`` and ``eta`` share the fast Wiener path.
    """

    delta: OUPath
    xi: OUPath
    eta: OUPath | None
    seed: int

    def shifted(self, tau: float) -> "NoisePaths":
        """Noise of the shifted realisation theta_tau omega."""
        return NoisePaths(self.delta.shifted(tau), self.xi.shifted(tau),
                          None if self.eta is None else self.eta.shifted(tau), self.seed)


def default_margin(spec: SystemSpec, relaxation_times: float = 10.0) -> float:
    """Future-noise margin for delta: a number of slowest relaxation times."""
    return relaxation_times / float(np.min(spec.a))


def _ceil_to(t: float, dt: float) -> float:
    return math.ceil(t / dt - 1e-9) * dt


def sample_noise(spec: SystemSpec, seed: int, t_min: float, t_max: float, dt: float,
                 eps: float | None = None, delta_dt: float | None = None,
                 delta_window: tuple[float, float] | None = None,
                 margin: float | None = None) -> NoisePaths:
    """Sample delta, xi and (when ``eps`` is given) eta for one seed.

    Parameters
    ----------
    t_min, t_max, dt : float
        Window and step of the fast paths.
    eps : float, optional
        Scale for eta.
    delta_dt : float, optional
        Step of the delta grid (defaults to ``dt``).
    delta_window : (float, float), optional
        Times at which delta is needed (defaults to ``(t_min, t_max)``).
    margin : float, optional
        Extra future noise beyond the window for the backward delta
        recursion; defaults to 10 slowest relaxation times.
    """
    grid = TimeGrid.from_bounds(t_min, t_max, dt)
    w2 = sample_wiener(seed, grid, spec.n_fast, W_FAST)
    xi = ou_xi(spec, w2)
    eta = ou_eta(spec, eps, w2) if eps is not None else None
    ddt = dt if delta_dt is None else delta_dt
    lo, hi = delta_window if delta_window is not None else (t_min, t_max)
    if margin is None:
        margin = default_margin(spec)
    dgrid = TimeGrid(ddt, math.ceil(-min(lo, 0.0) / ddt - 1e-9),
                     math.ceil((max(hi, 0.0) + margin) / ddt - 1e-9))
    w1 = sample_wiener(seed, dgrid, spec.n_slow, W_SLOW)
    return NoisePaths(ou_delta(spec, w1), xi, eta, int(seed) & MASK64)


# ------------------------------------------------------------- law check

def check_eta_xi_law(spec: SystemSpec, eps: float, n_replicas: int, seed: int = 0,
                     t: float = 1.0, dt: float = 0.01) -> dict:
    """Compare the marginal laws of eta(t) and xi(t/eps) over replicas.

    For every replica both processes are driven by the same fast Wiener
    path on ``[0, t/eps]``; the returned report holds, per fast mode, the
    empirical Wasserstein-1 distance next to the bound
    ``3 std / sqrt(n)``.
    """
    from .analysis import wasserstein1

    if n_replicas < 100:
        raise ConfigError("n_replicas must be at least 100")
    if not eps > 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    t_long = _ceil_to(t / eps, dt)
    grid = TimeGrid.from_bounds(0.0, t_long, dt)
    i_eta = grid.index_of(_ceil_to(t, dt))
    i_xi = grid.n_points - 1
    eta_s = np.empty((n_replicas, spec.n_fast))
    xi_s = np.empty((n_replicas, spec.n_fast))
    for i in range(n_replicas):
        w = sample_wiener(replica_seed(seed, i), grid, spec.n_fast, W_FAST)
        eta_s[i] = ou_eta(spec, eps, w).values[i_eta]
        xi_s[i] = ou_xi(spec, w).values[i_xi]
    std = spec.sigma2 / np.sqrt(-2.0 * spec.b)
    dist = np.array([wasserstein1(eta_s[:, m], xi_s[:, m]) for m in range(spec.n_fast)])
    bound = 3.0 * std / math.sqrt(n_replicas)
    return {
        "eps": eps, "t": float(grid.times[i_eta]), "n_replicas": n_replicas,
        "distance": dist.tolist(), "stationary_std": std.tolist(),
        "bound": bound.tolist(),
        "passed": bool(np.all(dist <= bound)),
    }


def stationary_variances(spec: SystemSpec) -> dict[str, np.ndarray]:
    """Analytic stationary variances of delta and of xi (equal to eta's)."""
    return {"delta": spec.sigma1 ** 2 / (2.0 * spec.a),
            "xi": spec.sigma2 ** 2 / (-2.0 * spec.b)}


def replica_seeds(base_seed: int, n: int) -> list[int]:
    return [replica_seed(base_seed, i) for i in range(n)]
