"""Factor-path simulation, running extrema, and discounted integrals.

Factors are geometric Brownian exponentials E(t) on a uniform grid, either in
martingale form exp(sigma*W - sigma^2 t/2) or raw form exp(sigma*W).  Path i of
an ensemble is reproducible from (master_seed, i) alone, so ensembles can be
regenerated or extended without storing state.

Monte Carlo reductions use numpy's pairwise summation, which is deterministic
for a fixed array layout.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError, DivergenceWarning, MonotonicityError

# Mean overshoot of a continuous Brownian extremum over its discretely sampled
# version is ~ 0.5826*sqrt(dt) (the -zeta(1/2)/sqrt(2*pi) coefficient).  Used
# only when an estimator explicitly opts into the extrema correction; the
# default everywhere is the uncorrected grid extremum.
EXTREMUM_OVERSHOOT = 0.5825971579390107

_MAX_ENSEMBLE_FLOATS = 2 * 10**8


def default_t_max(rate: float, tol: float = 1e-4) -> float:
    """Horizon T with discount weight e^{-rate*T} below tol."""
    if rate <= 0.0:
        raise DomainError("rate must be positive")
    return -math.log(tol) / rate


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k*dt, k = 0..n_steps, t_max = n_steps*dt."""

    t_max: float
    n_steps: int

    def __post_init__(self):
        if not self.t_max > 0.0:
            raise DomainError("t_max must be positive")
        if not (isinstance(self.n_steps, (int, np.integer)) and self.n_steps >= 1):
            raise DomainError("n_steps must be a positive integer")

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class FactorSpec:
    """One exponential factor: E(t) = exp(sigma*W - sigma^2 t/2) under the
    martingale convention, exp(sigma*W) under raw_exponential."""

    sigma: float
    drift_convention: str = "martingale"

    def __post_init__(self):
        if self.sigma < 0.0:
            raise DomainError("sigma must be nonnegative")
        if self.drift_convention not in ("martingale", "raw_exponential"):
            raise DomainError(
                "drift_convention must be 'martingale' or 'raw_exponential'")

    def values_from_brownian(self, w: np.ndarray, times: np.ndarray) -> np.ndarray:
        if self.sigma == 0.0:
            return np.ones_like(w)
        z = self.sigma * w
        if self.drift_convention == "martingale":
            z = z - 0.5 * self.sigma**2 * times
        return np.exp(z)


@dataclass(frozen=True)
class SamplePaths:
    """Ensemble of factor paths.

    values[j] is the (n_paths, n_steps+1) array of factor j; brownian[j] the
    driving W of factor j (drivers are shared between factors iff
    shared_driver).  values[j][:, 0] = 1 always.
    """

    grid: TimeGrid
    specs: tuple
    values: tuple
    brownian: tuple
    master_seed: int
    shared_driver: bool = False

    @property
    def n_paths(self) -> int:
        return self.values[0].shape[0]


def simulate_paths(specs, grid: TimeGrid, n_paths: int, master_seed: int = 0,
                   shared_driver: bool = False) -> SamplePaths:
    """Simulate factor ensembles; path i depends only on (master_seed, i).

    Factors get independent Brownian drivers unless shared_driver, the only
    supported correlation (rho = 1).
    """
    specs = tuple(specs)
    if not specs:
        raise ConfigError("at least one FactorSpec required")
    if not (isinstance(n_paths, (int, np.integer)) and n_paths >= 1):
        raise ConfigError("n_paths must be a positive integer")
    n_drivers = 1 if shared_driver else len(specs)
    n_pts = grid.n_steps + 1
    budget = n_paths * n_pts * (n_drivers + len(specs))
    if budget > _MAX_ENSEMBLE_FLOATS:
        raise ConfigError(
            f"ensemble of {budget} values exceeds the in-memory limit; "
            "use the streaming estimators for ensembles this large")
    sqdt = math.sqrt(grid.dt)
    w = np.empty((n_drivers, n_paths, n_pts))
    w[:, :, 0] = 0.0
    for i in range(n_paths):
        rng = _kernels.path_rng(master_seed, i)
        inc = rng.standard_normal((n_drivers, grid.n_steps))
        np.cumsum(inc, axis=-1, out=w[:, i, 1:])
    w *= sqdt
    times = grid.times
    values = []
    brownian = []
    for j, spec in enumerate(specs):
        wj = w[0] if shared_driver else w[j]
        brownian.append(wj)
        values.append(spec.values_from_brownian(wj, times))
    return SamplePaths(grid=grid, specs=specs, values=tuple(values),
                       brownian=tuple(brownian), master_seed=int(master_seed),
                       shared_driver=shared_driver)


@dataclass(frozen=True)
class MonotonePaths:
    """Nondecreasing paths with a possible bulk at t=0.

    values[..., 0] equals atom_at_zero (the process starts at 0-, jumps by the
    atom at 0), and increments may not fall below -1e-12.
    """

    grid: TimeGrid
    values: np.ndarray
    atom_at_zero: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        atom = np.asarray(self.atom_at_zero, dtype=float)
        if np.any(atom < 0.0):
            raise DomainError("atom_at_zero must be nonnegative")
        if not np.allclose(v[..., 0], atom, rtol=1e-12, atol=0.0):
            raise DomainError("values at t=0 must equal atom_at_zero")
        d = np.diff(v, axis=-1)
        if d.size and float(d.min()) < -1e-12:
            raise MonotonicityError(
                f"decreasing increment {float(d.min()):.3e} in monotone path")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "atom_at_zero", atom)


def running_sup(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """output[k] = max of values over steps 0..k along axis."""
    return np.maximum.accumulate(values, axis=axis)


def running_inf(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """output[k] = min of values over steps 0..k along axis."""
    return np.minimum.accumulate(values, axis=axis)


def two_time_inf(path_c: np.ndarray, path_x: np.ndarray, q: float,
                 u_step: int) -> float:
    """min over s in {0..u} of E_c(s) * E_x(u-s)^{-q}, both read from the same
    path (stationary increments make the shifted read exact in law)."""
    path_c = np.asarray(path_c, dtype=float)
    path_x = np.asarray(path_x, dtype=float)
    if not 0 <= u_step < path_c.shape[-1]:
        raise IndexError(f"u_step {u_step} outside grid")
    seg = path_c[: u_step + 1] * path_x[u_step::-1] ** (-q)
    return float(seg.min())


def two_time_inf_profile(path_c: np.ndarray, path_x: np.ndarray,
                         q: float) -> np.ndarray:
    """two_time_inf at every u in one pass; O(n^2) except when E_c is constant,
    where it reduces to a running minimum."""
    path_c = np.asarray(path_c, dtype=float)
    xq = np.asarray(path_x, dtype=float) ** (-q)
    n = path_c.shape[-1]
    if np.all(path_c == path_c[..., :1]):
        return path_c * running_inf(xq)
    out = np.empty(n)
    for u in range(n):
        out[u] = (path_c[: u + 1] * xq[u::-1]).min()
    return out


def discounted_integral(values: np.ndarray, rate: float, grid: TimeGrid):
    """Left-endpoint Riemann sum of e^{-rate*t} f(t) dt over [0, t_max)."""
    w = np.exp(-rate * grid.times[:-1]) * grid.dt
    return np.asarray(values)[..., :-1] @ w


def stieltjes_integral(integrand: np.ndarray, monotone: MonotonePaths):
    """g(0)*atom + sum_k g(t_k)*(values[k] - values[k-1]) per path."""
    g = np.asarray(integrand, dtype=float)
    v = monotone.values
    d = np.diff(v, axis=-1)
    if d.size and float(d.min()) < -1e-12:
        raise MonotonicityError(
            f"decreasing increment {float(d.min()):.3e} in Stieltjes integrator")
    return g[..., 0] * monotone.atom_at_zero + (g[..., 1:] * d).sum(axis=-1)


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with standard error; truncation_bound reports the
    (heuristic) mass or integral tail cut off by a finite horizon."""

    mean: float
    std_error: float
    n_paths: int
    truncation_bound: float = 0.0


def mc_estimate(per_path_values: np.ndarray,
                truncation_bound: float = 0.0) -> McEstimate:
    """Mean and standard error of a per-path functional; deterministic for a
    fixed array (pairwise summation)."""
    v = np.asarray(per_path_values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ConfigError("per-path values must be a nonempty 1-D array")
    n = v.size
    mean = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return McEstimate(mean=mean, std_error=se, n_paths=n,
                      truncation_bound=float(truncation_bound))


def sample_exponential_time(rate: float, seed: int) -> float:
    """One exponential time with mean 1/rate, reproducible from seed."""
    if rate <= 0.0:
        raise DomainError("rate must be positive")
    rng = np.random.Generator(np.random.SFC64(np.random.SeedSequence(int(seed))))
    return float(rng.exponential(1.0 / rate))


def _bulk_normals(rng, shape, scale):
    """Box-Muller block of N(0, scale^2), float32."""
    rows, n = shape
    half = (n + 1) // 2
    u = rng.random((rows, half), dtype=np.float32)
    v = rng.random((rows, half), dtype=np.float32)
    np.subtract(np.float32(1.0), u, out=u)
    np.log(u, out=u)
    u *= np.float32(-2.0 * scale * scale)
    np.sqrt(u, out=u)
    v *= np.float32(2.0 * math.pi)
    c = np.cos(v)
    np.sin(v, out=v)
    c *= u
    v *= u
    out = np.empty(shape, np.float32)
    out[:, :half] = c
    out[:, half:] = v[:, : n - half]
    return out


def exp_sup_estimate(rate: float, theta: float, n_draws: int, dt: float,
                     master_seed: int = 0, extrema_correction: bool = False,
                     t_cap: float | None = None) -> McEstimate:
    """Estimate E[exp(theta * sup_{s<=tau}(-W(s)))] with tau ~ Exp(rate).

    The supremum is read on the dt-grid (biased low by O(sqrt(dt)) unless
    extrema_correction shifts it up by EXTREMUM_OVERSHOOT*sqrt(dt)); tau is
    capped at t_cap (default 20/rate, cutting e^{-20} of the time-law mass).
    Deterministic given (master_seed, n_draws, dt, t_cap): draw lane 0 holds
    the exponential clocks, lane (1, b) the increments of path block b.
    """
    if rate <= 0.0 or dt <= 0.0:
        raise DomainError("rate and dt must be positive")
    if n_draws < 1:
        raise ConfigError("n_draws must be positive")
    if t_cap is None:
        t_cap = 20.0 / rate
    cap_steps = int(math.floor(t_cap / dt))
    rng_tau = np.random.Generator(
        np.random.SFC64(np.random.SeedSequence((int(master_seed), 0))))
    tau = rng_tau.exponential(1.0 / rate, size=n_draws)
    kill = np.minimum((tau / dt).astype(np.int64), cap_steps)
    order = np.argsort(-kill, kind="stable")
    kill_sorted = kill[order]

    block = 25000
    tile = 4000
    sqdt = math.sqrt(dt)
    sup_neg_w = np.empty(n_draws)
    for b, lo in enumerate(range(0, n_draws, block)):
        hi = min(lo + block, n_draws)
        kb = np.ascontiguousarray(kill_sorted[lo:hi])
        rng = np.random.Generator(
            np.random.SFC64(np.random.SeedSequence((int(master_seed), 1, b))))
        w_carry = np.zeros(hi - lo)
        m_carry = np.zeros(hi - lo)
        k_max = int(kb[0]) if kb.size else 0
        for k0 in range(0, k_max, tile):
            n_alive = int(np.searchsorted(-kb, -k0, side="left"))
            if n_alive == 0:
                break
            kt = min(tile, k_max - k0)
            inc = _bulk_normals(rng, (n_alive, kt), sqdt)
            _kernels.killed_running_min(inc, kb[:n_alive], k0,
                                        w_carry[:n_alive], m_carry[:n_alive])
        sup_neg_w[lo:hi] = -m_carry
    if extrema_correction:
        sup_neg_w += EXTREMUM_OVERSHOOT * sqdt
    vals = np.exp(theta * sup_neg_w)
    est = mc_estimate(vals, truncation_bound=math.exp(-rate * t_cap) * vals.mean())
    if est.std_error > 0.5 * abs(est.mean):
        warnings.warn("standard error exceeds half the estimate; the "
                      "functional may have diverging variance",
                      DivergenceWarning, stacklevel=2)
    return est
