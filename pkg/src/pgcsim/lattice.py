"""Backward solver for the signal process on a recombining binomial lattice.

The signal l* solves, node by node backward in time,

    E[ sum_{j>=k} dt e^{-r t_j} H(E_x(t_j), max(l, future levels)) | node ]
        = lambda * psi_c(t_k, node)

where H is the weighted reduced marginal of the planner problem
(sum_i w_i h(lambda E_x / w_i, C)) or the per-agent symmetric-game version
(h(lambda E_x, n*C)).  The auxiliary value function V(step, node, m) is the
conditional expectation above as a function of the running maximum m,
discretized on a logarithmic m-grid with piecewise log-log-linear
interpolation (monotone decreasing in m, so bisection brackets survive
interpolation).

With sigma = 0 every step has a single node and the backward recursion
decouples: l* is nonincreasing in time (the remaining horizon shrinks), the
running future maximum never binds, and each step reduces to one scalar
equation

    H(E_x, l) * D_k = lambda * E_c,    D_k = sum_{j>=k} dt e^{-r(t_j - t_k)},

which the solver evaluates in closed form.  The general machinery reduces to
exactly this, so the degenerate branch is a fast path, not an approximation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .economy import CobbDouglasUtility, ModelParams, validate
from .errors import (BracketError, ConfigError, GridMismatchError,
                     ToleranceError)
from .explicit import PolicyPair
from .paths import FactorSpec, MonotonePaths, SamplePaths, TimeGrid

_MAX_STOCHASTIC_STEPS = 6000
_MAX_DEGENERATE_STEPS = 2 * 10**6


@dataclass(frozen=True)
class Lattice:
    """Recombining binomial tree of the driving Brownian motion: W steps by
    +-sqrt(dt) with probability 1/2 each, so node j at step k carries
    W = (2j - k) sqrt(dt) and step k has k + 1 nodes.

    E_c, when present (sigma_c > 0), rides the same driver.  The martingale
    convention uses the discrete correction cosh(sigma sqrt(dt))^{-k}, which
    makes the one-step conditional mean exact on the tree (the continuous
    e^{-sigma^2 t/2} would leave an O(dt^2) drift per step).
    """

    grid: TimeGrid
    spec_x: FactorSpec
    spec_c: FactorSpec | None = None

    @property
    def is_degenerate(self) -> bool:
        sc = 0.0 if self.spec_c is None else self.spec_c.sigma
        return self.spec_x.sigma == 0.0 and sc == 0.0

    def n_nodes(self, k: int) -> int:
        return 1 if self.is_degenerate else k + 1

    def w_values(self, k: int) -> np.ndarray:
        if self.is_degenerate:
            return np.zeros(1)
        return (2.0 * np.arange(k + 1) - k) * math.sqrt(self.grid.dt)

    def _factor(self, spec: FactorSpec | None, k: int) -> np.ndarray:
        if spec is None or spec.sigma == 0.0:
            return np.ones(self.n_nodes(k))
        vals = np.exp(spec.sigma * self.w_values(k))
        if spec.drift_convention == "martingale":
            vals *= math.cosh(spec.sigma * math.sqrt(self.grid.dt)) ** (-k)
        return vals

    def ex(self, k: int) -> np.ndarray:
        return self._factor(self.spec_x, k)

    def ec(self, k: int) -> np.ndarray:
        return self._factor(self.spec_c, k)


def build_lattice(params: ModelParams, grid: TimeGrid,
                  drift_convention: str = "martingale") -> Lattice:
    """Lattice carrying the model's E_x and, when sigma_c > 0, an E_c factor
    in martingale form on the shared driver; psi_c stays deterministic
    otherwise.  drift_convention applies to E_x."""
    p = validate(params)
    spec_x = FactorSpec(p.sigma_x, drift_convention)
    spec_c = FactorSpec(p.sigma_c, "martingale") if p.sigma_c > 0.0 else None
    lat = Lattice(grid=grid, spec_x=spec_x, spec_c=spec_c)
    cap = _MAX_DEGENERATE_STEPS if lat.is_degenerate else _MAX_STOCHASTIC_STEPS
    if grid.n_steps > cap:
        raise ConfigError(
            f"{grid.n_steps} steps exceeds the {cap}-step lattice guard")
    return lat


@dataclass(frozen=True)
class SignalSolution:
    """l* per (step, node) for steps 0..n_steps-1, with the relative residual
    of the backward equation at every node."""

    lattice: Lattice
    params: ModelParams
    lam: float
    mode: str
    l_star: tuple
    residuals: tuple
    m_grid: np.ndarray | None

    @property
    def max_residual(self) -> float:
        return max(float(np.max(r)) for r in self.residuals)


def _make_integrand(h, params: ModelParams, lam: float, mode: str):
    """H(ex, c) with c in solved-variable units (aggregate for the planner,
    per-agent level for the symmetric game)."""
    n = params.n_agents
    ws = params.weights
    equal = all(abs(w - ws[0]) < 1e-15 for w in ws)
    if mode == "social_planner":
        if equal:
            return lambda ex, c: h(n * lam * ex, c)
        return lambda ex, c: sum(w * h(lam * ex / w, c) for w in ws)
    if mode == "nash_symmetric":
        if not equal:
            raise ConfigError("nash_symmetric requires equal agent weights")
        return lambda ex, c: h(lam * ex, n * c)
    raise ConfigError(f"unknown mode {mode!r}")


def _disc_sum(r: float, dt: float, m):
    """sum_{j=0}^{m-1} dt e^{-r j dt}, closed form."""
    edt = math.exp(-r * dt)
    return dt * (1.0 - edt ** np.asarray(m)) / (1.0 - edt)


def _grow_bracket(f, target, lo, hi, max_grow=220):
    """Expand [lo, hi] geometrically until f(lo) >= target >= f(hi)
    elementwise (f decreasing).  Deep tree nodes put roots hundreds of
    e-folds from the seed bracket, hence the generous growth budget."""
    tiny = np.finfo(float).tiny
    for _ in range(max_grow):
        bad_lo = f(lo) < target
        bad_hi = f(hi) > target
        if not (np.any(bad_lo) or np.any(bad_hi)):
            return lo, hi
        lo = np.where(bad_lo, np.maximum(lo / 8.0, tiny), lo)
        hi = np.where(bad_hi, hi * 8.0, hi)
    raise BracketError("no sign change for the backward equation; lambda or "
                       "horizon is likely misconfigured")


def _bisect(f, target, lo, hi, tol, max_iter=90):
    """Vectorized bisection for decreasing f on positive brackets, with the
    midpoint taken geometrically — the levels solved here spread over many
    orders of magnitude across tree nodes, and a linear midpoint cannot reach
    relative precision on the small ones within the iteration budget.
    Returns (root, relative residual); an exactly-zero midpoint residual
    freezes that element — the midpoint is the answer (determinism)."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    mid = np.sqrt(lo) * np.sqrt(hi)
    res = f(mid) - target
    for _ in range(max_iter):
        done = np.abs(res) <= tol * np.abs(target)
        if np.all(done):
            break
        high = res > 0.0  # f(mid) above target -> root lies right of mid
        lo = np.where(done, lo, np.where(high, mid, lo))
        hi = np.where(done, hi, np.where(high, hi, mid))
        mid_new = np.where(done, mid, np.sqrt(lo) * np.sqrt(hi))
        res = np.where(done, res, f(mid_new) - target)
        mid = mid_new
    rel = np.abs(res) / np.abs(target)
    if np.any(rel > tol):
        raise ToleranceError(
            f"bisection stalled at relative residual {float(np.max(rel)):.3e}")
    return mid, rel


def _frozen_factor_levels(lat: Lattice, H, lam: float, r: float, tol: float):
    """Level per (step, node) with the factors frozen at their step-k values:
    H(ex, l) * D_k = lam * ec, D_k discounted at interval midpoints.  Exact on
    the degenerate lattice; otherwise the scale estimate that centres each
    node's running-max window."""
    n = lat.grid.n_steps
    dt = lat.grid.dt
    mid = math.exp(-0.5 * r * dt)
    levels, residuals = [], []
    for k in range(n):
        ex, ec = lat.ex(k), lat.ec(k)
        d_k = mid * float(_disc_sum(r, dt, n - k))
        f = lambda l: H(ex, l) * d_k
        target = lam * ec
        lo, hi = _grow_bracket(f, target, np.full_like(ex, 0.5),
                               np.full_like(ex, 2.0))
        root, rel = _bisect(f, target, lo, hi, tol)
        levels.append(root)
        residuals.append(rel)
    return levels, residuals


def _frozen_factor_levels_degenerate(lat, H, lam, r, tol):
    """All steps at once; one node per step."""
    n = lat.grid.n_steps
    ex = float(lat.ex(0)[0])
    ec = float(lat.ec(0)[0])
    d = math.exp(-0.5 * r * lat.grid.dt) \
        * _disc_sum(r, lat.grid.dt, n - np.arange(n))
    f = lambda l: H(ex, l) * d
    target = np.full(n, lam * ec)
    lo, hi = _grow_bracket(f, target, np.full(n, 0.5), np.full(n, 2.0))
    return _bisect(f, target, lo, hi, tol)


def _interp_loglog(log_m_grid, log_v_rows, log_m_query):
    """Each row of V interpolated at one query point, linear in
    (log m, log V); clamped-cell extrapolation beyond the grid."""
    cell = log_m_grid[1] - log_m_grid[0]
    pos = (log_m_query - log_m_grid[0]) / cell
    idx = np.clip(pos.astype(np.int64), 0, log_m_grid.size - 2)
    w = pos - idx
    rows = np.arange(log_v_rows.shape[0])
    v0 = log_v_rows[rows, idx]
    v1 = log_v_rows[rows, idx + 1]
    return np.exp(v0 + w * (v1 - v0))


class _SpanOverflow(Exception):
    """A solved level reached the edge of its node-relative m-window."""


def solve_signal(lattice: Lattice, h, lam: float, params: ModelParams,
                 mode: str = "social_planner", m_points: int = 64,
                 tol: float = 1e-8, sup_correction: bool = True
                 ) -> SignalSolution:
    """Backward induction for l*.  h is any reduced marginal that is strictly
    decreasing in both arguments, broadcasts over numpy arrays, and blows up
    as its second argument tends to 0 (the Cobb-Douglas reduced_marginal_h,
    typically).

    Two ingredients keep the scheme's bias small instead of O(sqrt(dt)):
    flow terms are discounted at interval midpoints, and (sup_correction, on
    by default) the running-max argument consumed by the flow is raised by
    the expected overshoot of a Brownian extremum between samples —
    0.5826 * (per-step std of log l*), read off each node's two children —
    since between sampling times the prevailing contribution level exceeds
    the sampled maximum by exactly that much on average.  Neither ingredient
    changes the degenerate sigma = 0 scalar equations beyond the midpoint
    discount."""
    p = validate(params)
    if not (lam > 0.0) or not math.isfinite(lam):
        raise ConfigError("lambda must be positive and finite")
    r = p.discount_rate
    H = _make_integrand(h, p, lam, mode)
    if lattice.is_degenerate:
        levels, rel = _frozen_factor_levels_degenerate(lattice, H, lam, r, tol)
        return SignalSolution(lattice=lattice, params=p, lam=lam, mode=mode,
                              l_star=tuple(np.array([v]) for v in levels),
                              residuals=tuple(np.array([e]) for e in rel),
                              m_grid=None)

    # node-relative scales: levels across the tree spread over hundreds of
    # e-folds, so one absolute grid cannot resolve them all — each node's
    # m-window is centred on its frozen-factor level instead
    scales, _ = _frozen_factor_levels(lattice, H, lam, r, tol)
    span = math.log(4.0)
    for _ in range(4):
        try:
            return _solve_stochastic(lattice, H, p, lam, mode, m_points, tol,
                                     scales, span, sup_correction)
        except _SpanOverflow:
            span *= 2.0
    raise BracketError("running-max window failed to cover l* after expansion")


def _solve_stochastic(lat, H, p, lam, mode, m_points, tol, scales, span,
                      sup_correction):
    from .paths import EXTREMUM_OVERSHOOT

    n = lat.grid.n_steps
    dt = lat.grid.dt
    r = p.discount_rate
    times = lat.grid.times
    y = np.linspace(-span, span, m_points)  # log m relative to node scale
    cell = y[1] - y[0]
    l_rows = [None] * n
    res_rows = [None] * n

    def child_u(log_v_rows, log_s, log_l, tgt, log_m_abs):
        """U(child, m) = V(child, max(m, l*(child))), log-log-linear in m
        with edge-slope extrapolation.  V kinks at the child's own level,
        where its value is exactly lambda*psi_c (the defining equation); a
        cell straddling the kink is interpolated from the kink itself, not
        from the grid point buried under it — a plain chord there leaves a
        first-order-in-cell bias that does not vanish with dt."""
        logm_rel = log_m_abs - log_s
        logl_rel = log_l - log_s
        pos = (logm_rel + span) / cell
        idx = np.clip(np.floor(pos).astype(np.int64), 0, m_points - 2)
        y_lo = idx * cell - span
        straddle = y_lo < logl_rel
        lo_y = np.where(straddle, logl_rel, y_lo)
        lo_v = np.where(straddle, np.log(tgt),
                        np.take_along_axis(log_v_rows, idx, axis=1))
        hi_v = np.take_along_axis(log_v_rows, idx + 1, axis=1)
        gap = np.maximum((y_lo + cell) - lo_y, 1e-300)
        frac = (logm_rel - lo_y) / gap
        interp = np.exp(lo_v * (1.0 - frac) + hi_v * frac)
        return np.where(logm_rel <= logl_rel, tgt, interp)

    v_next = None  # V at step n is identically 0
    log_l_next = log_s_next = tgt_next = None
    for k in range(n - 1, -1, -1):
        ex, ec = lat.ex(k), lat.ec(k)
        disc_flow = math.exp(-r * (times[k] + 0.5 * dt))
        target = lam * math.exp(-r * times[k]) * ec
        log_s = np.log(scales[k])

        if v_next is None:
            flow_shift = np.zeros(k + 1)
        elif sup_correction:
            # per-step std of log l* seen from node j is half the spread of
            # its two children's levels; the flow consumes the continuous
            # sup, which exceeds the sampled maximum by 0.5826 * that std
            flow_shift = EXTREMUM_OVERSHOOT * 0.5 * np.abs(np.diff(log_l_next))
        else:
            flow_shift = np.zeros(k + 1)

        if v_next is None:
            def value_at(l, _d=disc_flow, _ex=ex, _s=flow_shift):
                return dt * _d * H(_ex, l * np.exp(_s))
        else:
            log_v_next = np.log(v_next)

            def value_at(l, _d=disc_flow, _ex=ex, _s=flow_shift,
                         _lv=log_v_next):
                logl = np.log(l)[:, None]
                vu = child_u(_lv[1:], log_s_next[1:, None],
                             log_l_next[1:, None], tgt_next[1:, None], logl)
                vd = child_u(_lv[:-1], log_s_next[:-1, None],
                             log_l_next[:-1, None], tgt_next[:-1, None],
                             logl)
                return dt * _d * H(_ex, l * np.exp(_s)) \
                    + 0.5 * (vu[:, 0] + vd[:, 0])

        lo = np.exp(log_s - span)
        hi = np.exp(log_s + span)
        if np.any(value_at(lo) < target) or np.any(value_at(hi) > target):
            raise _SpanOverflow
        root, rel = _bisect(value_at, target, lo, hi, tol)
        log_root = np.log(root)
        if (np.any(log_root < log_s - span + cell)
                or np.any(log_root > log_s + span - cell)):
            raise _SpanOverflow
        l_rows[k] = root
        res_rows[k] = rel

        if k > 0:
            log_m_abs = log_s[:, None] + y[None, :]
            v_k = dt * disc_flow * H(ex[:, None],
                                     np.exp(log_m_abs
                                            + flow_shift[:, None]))
            if v_next is not None:
                vu = child_u(log_v_next[1:], log_s_next[1:, None],
                             log_l_next[1:, None], tgt_next[1:, None],
                             log_m_abs)
                vd = child_u(log_v_next[:-1], log_s_next[:-1, None],
                             log_l_next[:-1, None], tgt_next[:-1, None],
                             log_m_abs)
                v_k += 0.5 * (vu + vd)
            v_next = v_k
            log_s_next = log_s
            log_l_next = log_root
            tgt_next = target
    return SignalSolution(lattice=lat, params=p, lam=lam, mode=mode,
                          l_star=tuple(l_rows), residuals=tuple(res_rows),
                          m_grid=np.exp(y))


def simulate_bernoulli_paths(lattice: Lattice, n_paths: int,
                             master_seed: int = 0) -> SamplePaths:
    """Paths whose increments are +-sqrt(dt) coin flips, so W lands exactly
    on lattice nodes (zero projection error); factor values follow the
    lattice conventions.  Path i depends only on (master_seed, i)."""
    if n_paths < 1:
        raise ConfigError("n_paths must be positive")
    grid = lattice.grid
    n = grid.n_steps
    sqdt = math.sqrt(grid.dt)
    w = np.empty((n_paths, n + 1))
    w[:, 0] = 0.0
    for i in range(n_paths):
        rng = _kernels.path_rng(master_seed, i)
        steps = (rng.integers(0, 2, size=n) * 2 - 1).astype(np.float64)
        np.cumsum(steps, out=w[i, 1:])
    w *= sqdt
    ks = np.arange(n + 1)
    spec_list = ((lattice.spec_c,) if lattice.spec_c else ()) \
        + (lattice.spec_x,)
    values, brownian = [], []
    for spec in spec_list:
        vals = np.exp(spec.sigma * w) if spec.sigma > 0.0 else np.ones_like(w)
        if spec.sigma > 0.0 and spec.drift_convention == "martingale":
            vals *= math.cosh(spec.sigma * sqdt) ** (-ks)
        values.append(vals)
        brownian.append(w)
    return SamplePaths(grid=grid, specs=tuple(spec_list),
                       values=tuple(values), brownian=tuple(brownian),
                       master_seed=int(master_seed),
                       shared_driver=lattice.spec_c is not None)


def policy_from_signal(signal: SignalSolution, sample: SamplePaths,
                       utility=None) -> PolicyPair:
    """The lattice policy along simulated paths: C = max(0, running sup of l*
    read off each path's nearest-node projection), x from the binding
    first-order condition via inverse_marginal_g.

    social_planner mode returns the aggregate pair (C aggregate, x summed
    over agents); nash_symmetric returns the per-agent pair.  The worst
    |W - W_node| snap distance is reported on the pair."""
    p = signal.params
    if utility is None:
        utility = CobbDouglasUtility.from_params(p)
    lat = signal.lattice
    grid = sample.grid
    if (grid.n_steps != lat.grid.n_steps
            or abs(grid.t_max - lat.grid.t_max) > 1e-12 * lat.grid.t_max):
        raise GridMismatchError("sample grid differs from lattice grid")
    n = grid.n_steps
    w = sample.brownian[-1]
    ex = sample.values[-1]
    sqdt = math.sqrt(grid.dt)
    n_paths = w.shape[0]

    lval = np.empty((n_paths, n + 1))
    max_dw = 0.0
    if lat.is_degenerate:
        flat = np.fromiter((row[0] for row in signal.l_star), float, count=n)
        lval[:, :n] = flat[None, :]
    else:
        for k in range(n):
            j = np.rint(0.5 * (w[:, k] / sqdt + k)).astype(np.int64)
            np.clip(j, 0, k, out=j)
            w_node = (2 * j - k) * sqdt
            max_dw = max(max_dw, float(np.abs(w[:, k] - w_node).max()))
            lval[:, k] = signal.l_star[k][j]
    lval[:, n] = lval[:, n - 1]  # no signal defined at the terminal step
    c_solved = np.maximum(np.maximum.accumulate(lval, axis=1), 0.0)

    g = utility.inverse_marginal_g
    lam = signal.lam
    if signal.mode == "social_planner":
        ws = p.weights
        if all(abs(wgt - ws[0]) < 1e-15 for wgt in ws):
            x = p.n_agents * g(p.n_agents * lam * ex, c_solved)
        else:
            x = sum(g(lam * ex / wgt, c_solved) for wgt in ws)
        owner = "aggregate"
    else:
        x = g(lam * ex, p.n_agents * c_solved)
        owner = "nash_agent_i"
    contribution = MonotonePaths(grid, c_solved, c_solved[:, 0])
    return PolicyPair(x=x, contribution=contribution, owner=owner,
                      projection_error=max_dw)


def _budget_of_policy(signal: SignalSolution, utility, n_paths: int,
                      master_seed: int) -> float:
    """Discounted spend of the lattice policy: closed form on the degenerate
    lattice, Bernoulli-path Monte Carlo otherwise.  Aggregate spend for the
    planner, per-agent spend for the symmetric game."""
    from .paths import discounted_integral, stieltjes_integral

    p = signal.params
    lat = signal.lattice
    grid = lat.grid
    r = p.discount_rate
    g = utility.inverse_marginal_g
    if lat.is_degenerate:
        l0 = float(signal.l_star[0][0])  # l* nonincreasing: sup is the atom
        d0 = float(_disc_sum(r, grid.dt, grid.n_steps))
        if signal.mode == "social_planner":
            ws = p.weights
            if all(abs(wgt - ws[0]) < 1e-15 for wgt in ws):
                x = p.n_agents * float(g(p.n_agents * signal.lam, l0))
            else:
                x = sum(float(g(signal.lam / wgt, l0)) for wgt in ws)
        else:
            x = float(g(signal.lam, p.n_agents * l0))
        return l0 + x * d0
    sample = simulate_bernoulli_paths(lat, n_paths, master_seed)
    pair = policy_from_signal(signal, sample, utility)
    ec = sample.values[0] if lat.spec_c is not None else 1.0
    psi_c = np.exp(-r * grid.times) * ec
    spend = (discounted_integral(sample.values[-1] * pair.x, r, grid)
             + stieltjes_integral(psi_c, pair.contribution))
    return float(np.mean(spend))


def calibrate_lambda(lattice: Lattice, utility, target: float,
                     params: ModelParams, mode: str = "social_planner",
                     tol: float = 1e-6, lambda0: float = 1.0,
                     m_points: int = 64, budget_paths: int = 4096,
                     master_seed: int = 0):
    """Find lambda whose solved policy spends `target` (aggregate n*w for the
    planner, per-agent w for the symmetric game); returns
    (lambda, SignalSolution).

    First pass: solve at lambda0 and jump using the homogeneity
    B(lambda) = B(lambda0) * (lambda/lambda0)^{-1/(1-alpha-beta)}, exact for
    the Cobb-Douglas pair (h, g) so the verifying re-solve normally ends the
    search; log-log secant steps cover other utility contracts."""
    p = validate(params)
    if not (target > 0.0):
        raise ConfigError("budget target must be positive")
    h = utility.reduced_marginal_h
    # the budget inherits the signal solver's tolerance, so solve tighter
    # than the calibration asks for
    solver_tol = max(min(1e-8, 0.1 * tol), 1e-12)

    def budget_at(lam):
        sol = solve_signal(lattice, h, lam, p, mode, m_points=m_points,
                           tol=solver_tol)
        return _budget_of_policy(sol, utility, budget_paths, master_seed), sol

    lam = float(lambda0)
    b, _ = budget_at(lam)
    lam_next = lam * (b / target) ** (1.0 - p.alpha - p.beta)
    b_next, sol_next = budget_at(lam_next)
    for _ in range(60):
        if abs(b_next - target) <= tol * target:
            return lam_next, sol_next
        dlogb = math.log(b_next) - math.log(b)
        if dlogb == 0.0:
            raise BracketError("budget insensitive to lambda")
        slope = (math.log(lam_next) - math.log(lam)) / dlogb
        lam, b = lam_next, b_next
        step = min(max(slope * (math.log(target) - math.log(b)),
                       -math.log(8.0)), math.log(8.0))
        lam_next = math.exp(math.log(lam) + step)
        b_next, sol_next = budget_at(lam_next)
    raise ToleranceError("lambda calibration did not converge")
