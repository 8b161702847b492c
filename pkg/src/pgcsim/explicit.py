"""Explicit planner and Nash solutions for the Cobb-Douglas economy.

Processes: theta(t) is the running supremum of
E_c^{-(1-a)/(1-a-b)} * E_x^{-a/(1-a-b)}, gamma(t) the deflated consumption
factor built from a running infimum, and the constants

    A     = E[ integral delta e^{-ru} inf_{s<=u}(E_c(s) E_x^{-a/(1-a)}(u-s)) du ]
    l0    = n w / E[ integral psi_x gamma dt + integral psi_c d(theta) ]
    kappa =   w / E[ integral psi_x gamma dt + (1/n) integral psi_c d(theta) ]

feed the policies C*(t) = l0*theta(t), x*_i = (l0/n)*gamma(t) (planner) and
C_hat_i = (kappa/n)*theta, x_hat_i = kappa*gamma (Nash).  Two evaluation
routes are provided: closed-form integrals for the Black-Scholes configuration
(sigma_c = 0, raw-exponential E_x), and Monte Carlo.

The Monte Carlo route switches between a desk-scale ensemble computation (any
factor configuration) and a tiled streaming estimator for the Black-Scholes
configuration, which handles 10^5 paths x 5*10^4 steps in tens of seconds.
Convention for two-factor ensembles everywhere in this module: factor 0 is
E_c, factor 1 is E_x; single-factor ensembles are E_x with E_c deterministic.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .economy import CobbDouglasUtility, ModelParams, validate
from .errors import ConfigError, DivergenceWarning, DomainError
from .paths import (EXTREMUM_OVERSHOOT, McEstimate, MonotonePaths, SamplePaths,
                    TimeGrid, discounted_integral, mc_estimate, running_inf,
                    running_sup, stieltjes_integral, two_time_inf_profile)


def _split_factors(sample: SamplePaths):
    """(E_c values or None, E_x values) under the factor-order convention."""
    if len(sample.values) == 1:
        return None, sample.values[0]
    if len(sample.values) == 2:
        return sample.values[0], sample.values[1]
    raise ConfigError("expected one (E_x) or two (E_c, E_x) factors")


def _threshold_log_vol(sample: SamplePaths, params: ModelParams) -> float:
    """Volatility of log(E_c^{-(1-a)/s} E_x^{-a/s}), the process whose running
    extrema drive theta and gamma."""
    p = params
    s = 1.0 - p.alpha - p.beta
    cx = p.alpha / s * sample.specs[-1].sigma
    if len(sample.specs) == 1:
        return cx
    cc = (1.0 - p.alpha) / s * sample.specs[0].sigma
    return cx + cc if sample.shared_driver else math.hypot(cx, cc)


def theta_path(sample: SamplePaths, params: ModelParams,
               extrema_correction: bool = False) -> MonotonePaths:
    """Running supremum of E_c^{-(1-a)/(1-a-b)} E_x^{-a/(1-a-b)}; starts at 1
    (the unit bulk at t=0).

    extrema_correction compensates the sqrt(dt) undershoot of a sampled
    supremum (the EXTREMUM_OVERSHOOT shift, applied in log scale and floored
    at the t=0 bulk)."""
    p = validate(params)
    ec, ex = _split_factors(sample)
    s = 1.0 - p.alpha - p.beta
    cand = ex ** (-p.alpha / s)
    if ec is not None:
        cand = cand * ec ** (-(1.0 - p.alpha) / s)
    theta = running_sup(cand)
    if extrema_correction:
        q = (EXTREMUM_OVERSHOOT * _threshold_log_vol(sample, p)
             * math.sqrt(sample.grid.dt))
        theta = np.maximum(theta * math.exp(q), 1.0)
        theta[..., 0] = 1.0
    return MonotonePaths(sample.grid, theta, np.ones(theta.shape[0]))


def gamma_path(sample: SamplePaths, params: ModelParams, A: float,
               extrema_correction: bool = False) -> np.ndarray:
    """(1/A) * [((a+b)/a) E_x(t) inf_{s<=t}(E_c^{b(1-a)/(1-a-b)}(s)
    E_x^{ab/(1-a-b)}(s))]^{-1/(1-a)}.

    The infimum inside is theta's driving process to the power -b, so
    extrema_correction shifts it by the matching factor and the pair
    (theta_path, gamma_path) stays consistent with the binding first-order
    condition."""
    p = validate(params)
    if A <= 0.0:
        raise DomainError("A must be positive")
    ec, ex = _split_factors(sample)
    s = 1.0 - p.alpha - p.beta
    inner = ex ** (p.alpha * p.beta / s)
    if ec is not None:
        inner = inner * ec ** (p.beta * (1.0 - p.alpha) / s)
    inf_part = running_inf(inner)
    if extrema_correction:
        q = (p.beta * EXTREMUM_OVERSHOOT * _threshold_log_vol(sample, p)
             * math.sqrt(sample.grid.dt))
        inf_part = np.minimum(inf_part * math.exp(-q), 1.0)
        inf_part[..., 0] = 1.0
    base = (p.exponent_sum / p.alpha) * ex * inf_part
    return (1.0 / A) * base ** (-1.0 / (1.0 - p.alpha))


def _two_time_inf_profile_ensemble(ec, exq):
    n = exq.shape[1]
    out = np.empty_like(exq)
    for u in range(n):
        out[:, u] = (ec[:, : u + 1] * exq[:, u::-1]).min(axis=1)
    return out


def estimate_A_mc(sample: SamplePaths, params: ModelParams) -> McEstimate:
    """Monte Carlo value of A over an in-memory ensemble.

    Truncation bound: the two-time infimum is nonincreasing in u, so the tail
    beyond t_max is at most its value there times delta*e^{-r t_max}/r.
    """
    p = validate(params)
    util = CobbDouglasUtility.from_params(p)
    ec, ex = _split_factors(sample)
    q = p.alpha / (1.0 - p.alpha)
    exq = ex ** (-q)
    if ec is None or np.all(ec == 1.0):
        profile = running_inf(exq)
    else:
        profile = _two_time_inf_profile_ensemble(ec, exq)
    r = p.discount_rate
    per_path = util.delta * discounted_integral(profile, r, sample.grid)
    tail = util.delta * math.exp(-r * sample.grid.t_max) / r * profile[:, -1].mean()
    est = mc_estimate(per_path, truncation_bound=tail)
    if est.std_error > 0.5 * abs(est.mean):
        warnings.warn("A estimate has standard error above half its mean; "
                      "the integral may not be finite for these parameters",
                      DivergenceWarning, stacklevel=2)
    return est


def analytic_A_bs(params: ModelParams) -> float:
    """(delta/r) * sqrt(2r)/(sqrt(2r) + sigma*a/(1-a)) for sigma_c = 0 and
    raw-exponential E_x."""
    p = validate(params, mode="black_scholes")
    util = CobbDouglasUtility.from_params(p)
    s2r = math.sqrt(2.0 * p.discount_rate)
    drag = p.sigma_x * p.alpha / (1.0 - p.alpha)
    return util.delta / p.discount_rate * s2r / (s2r + drag)


def analytic_I_theta_bs(params: ModelParams) -> float:
    """E[integral of psi_c d(theta)] = sqrt(2r)/(sqrt(2r) - sigma*a/(1-a-b))."""
    p = validate(params, mode="black_scholes")
    s2r = math.sqrt(2.0 * p.discount_rate)
    lift = p.sigma_x * p.alpha / (1.0 - p.alpha - p.beta)
    return s2r / (s2r - lift)


def analytic_I_gamma_bs(params: ModelParams) -> float:
    """E[integral of psi_x gamma dt] = (a/b) * analytic_I_theta_bs."""
    p = validate(params, mode="black_scholes")
    return p.alpha / p.beta * analytic_I_theta_bs(p)


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings for constants(method='monte_carlo').

    extrema_correction shifts grid extrema by the mean Brownian overshoot
    EXTREMUM_OVERSHOOT*sqrt(dt); off by default (raw grid extrema)."""

    grid: TimeGrid
    n_paths: int = 10000
    master_seed: int = 0
    extrema_correction: bool = False
    block_paths: int = 250


@dataclass(frozen=True)
class ExplicitConstants:
    A: float
    l0: float
    kappa: float
    lambda_sp: float
    lambda_nash: float
    method: str
    std_errors: dict | None = None
    diagnostics: dict | None = None

    @property
    def ratio(self) -> float:
        return self.kappa / self.l0


def _constants_from_integrals(p: ModelParams, A, i_gamma, i_theta):
    n = p.n_agents
    l0 = n * p.wealth / (i_gamma + i_theta)
    kappa = p.wealth / (i_gamma + i_theta / n)
    s = p.exponent_sum
    lambda_sp = n ** (-p.alpha) * A ** (1.0 - p.alpha) * l0 ** (s - 1.0)
    lambda_nash = A ** (1.0 - p.alpha) * kappa ** (s - 1.0)
    return dict(A=A, l0=l0, kappa=kappa, lambda_sp=lambda_sp,
                lambda_nash=lambda_nash, I_gamma=i_gamma, I_theta=i_theta,
                ratio=kappa / l0)


def _bs_stream_functionals(p: ModelParams, mc: McConfig):
    """Per-path sums (g, t, a) for the Black-Scholes configuration:

        g_i = sum dt e^{-rt_k} Cg exp(-ca*W - cb*runmin)   (= A * psi_x gamma)
        t_i = 1 + sum e^{-rt_k} d(exp(-ct*runmin))         (= psi_c d(theta))
        a_i = sum dt e^{-rt_k} delta exp(-ca*runmax)       (= A's integrand)

    Tiled float32 streaming with float64 carries; path i's draws depend only
    on (master_seed, i).
    """
    validate(p, mode="black_scholes")
    util = CobbDouglasUtility(p.alpha, p.beta)
    sig, r = p.sigma_x, p.discount_rate
    ca = sig * p.alpha / (1.0 - p.alpha)
    ct = sig * p.alpha / (1.0 - p.alpha - p.beta)
    cb = ct * p.beta / (1.0 - p.alpha)
    cg = p.exponent_sum / p.alpha
    cgam = cg ** (-1.0 / (1.0 - p.alpha))
    grid, n_paths = mc.grid, mc.n_paths
    n, dt = grid.n_steps, grid.dt
    sqdt = math.sqrt(dt)
    shift = EXTREMUM_OVERSHOOT * sqdt if mc.extrema_correction else 0.0

    t_slots = grid.times[1:]  # slot j of the scan is time t_{j+1}
    disc = np.exp(-r * t_slots)
    wl = np.where(t_slots < grid.t_max, dt * disc, 0.0)  # left endpoints 1..N-1
    wl_g = (cgam * wl).astype(np.float32)
    wa_prefix = np.concatenate(([0.0], np.cumsum(util.delta * wl)))

    g = np.empty(n_paths)
    t = np.empty(n_paths)
    a = np.empty(n_paths)
    tail_g = np.empty(n_paths)
    tail_a = np.empty(n_paths)
    theta_end = np.empty(n_paths)

    pb = min(mc.block_paths, n_paths)
    inc = np.empty((pb, n), np.float32)
    u1 = np.empty((pb, n), np.float32)
    for lo in range(0, n_paths, pb):
        hi = min(lo + pb, n_paths)
        m = hi - lo
        rngs = [_kernels.path_rng(mc.master_seed, i) for i in range(lo, hi)]
        _kernels.fill_normal_rows(rngs, inc[:m], sqdt)
        w0 = np.empty(m)
        mn0 = np.empty(m)
        mx0 = np.empty(m)
        t_acc = np.zeros(m)
        a_acc = np.zeros(m)
        _kernels.scan_planner_block(inc[:m], u1[:m], wa_prefix, disc, t_acc,
                                    a_acc, w0, mn0, mx0, -ca, -cb, ct, shift)
        np.exp(u1[:m], out=u1[:m])
        g[lo:hi] = u1[:m] @ wl_g + cgam * dt
        a[lo:hi] = a_acc + util.delta * dt
        t[lo:hi] = 1.0 + t_acc
        tail_a[lo:hi] = np.exp(-ca * (mx0 + shift))
        tail_g[lo:hi] = np.exp(-ca * w0 - cb * (mn0 - shift))
        theta_end[lo:hi] = np.exp(-ct * (mn0 - shift))

    e_rt = math.exp(-r * grid.t_max)
    tails = {
        "A": util.delta * e_rt / r * float(tail_a.mean()),
        "I_gamma_num": cgam * e_rt / (r - ca * ca / 2.0) * float(tail_g.mean()),
        "theta_mass_at_t_max": e_rt * float(theta_end.mean()),
    }
    return g, t, a, tails


def _delta_method(samples: dict, outputs, n: int):
    """Standard errors of outputs(mean vector) via a numeric Jacobian and the
    sample covariance of the per-path functionals."""
    names = list(samples)
    mat = np.vstack([samples[k] for k in names])
    mean = mat.mean(axis=1)
    base = outputs(dict(zip(names, mean)))
    if n < 2:
        return base, {k: 0.0 for k in base}
    cov = np.cov(mat)
    keys = list(base)
    jac = np.empty((len(keys), len(names)))
    for j, nm in enumerate(names):
        h = max(abs(mean[j]), 1.0) * 1e-6
        up = mean.copy(); up[j] += h
        dn = mean.copy(); dn[j] -= h
        fu = outputs(dict(zip(names, up)))
        fd = outputs(dict(zip(names, dn)))
        for i, k in enumerate(keys):
            jac[i, j] = (fu[k] - fd[k]) / (2.0 * h)
    var = np.einsum("ij,jk,ik->i", jac, np.atleast_2d(cov), jac) / n
    return base, {k: math.sqrt(max(v, 0.0)) for k, v in zip(keys, var)}


def constants(params: ModelParams, method: str = "analytic_bs",
              mc: McConfig | None = None) -> ExplicitConstants:
    """A, l0, kappa and the two multipliers.

    analytic_bs requires the Black-Scholes configuration (sigma_c = 0); it is
    exact.  monte_carlo streams the Black-Scholes functionals when sigma_c = 0
    and otherwise falls back to an in-memory two-factor ensemble (factor order
    E_c, E_x; E_x raw-exponential as in the analytic configuration).
    """
    p = validate(params)
    if method == "analytic_bs":
        if p.sigma_c != 0.0:
            raise ConfigError("analytic constants require sigma_c = 0")
        validate(p, mode="black_scholes")
        A = analytic_A_bs(p)
        vals = _constants_from_integrals(p, A, analytic_I_gamma_bs(p),
                                         analytic_I_theta_bs(p))
        return ExplicitConstants(A=vals["A"], l0=vals["l0"], kappa=vals["kappa"],
                                 lambda_sp=vals["lambda_sp"],
                                 lambda_nash=vals["lambda_nash"],
                                 method=method,
                                 diagnostics={"I_theta": vals["I_theta"],
                                              "I_gamma": vals["I_gamma"]})
    if method != "monte_carlo":
        raise ConfigError(f"unknown constants method {method!r}")
    if mc is None:
        mc = McConfig(grid=TimeGrid(200.0, 4000), n_paths=4000)
    if p.sigma_c == 0.0:
        g, t, a, tails = _bs_stream_functionals(p, mc)
    else:
        g, t, a, tails = _ensemble_functionals(p, mc)

    def outputs(m):
        return _constants_from_integrals(p, m["a"], m["g"] / m["a"], m["t"])

    vals, ses = _delta_method({"g": g, "t": t, "a": a}, outputs, mc.n_paths)
    for key in ("A", "I_theta", "I_gamma"):
        if ses[key] > 0.5 * abs(vals[key]):
            warnings.warn(f"{key} estimate has standard error above half its "
                          "mean; likely divergent for these parameters",
                          DivergenceWarning, stacklevel=2)
    diag = {"I_theta": vals["I_theta"], "I_gamma": vals["I_gamma"],
            "ratio": vals["ratio"], "truncation": tails,
            "extrema_correction": mc.extrema_correction,
            "dt": mc.grid.dt, "t_max": mc.grid.t_max, "n_paths": mc.n_paths,
            "master_seed": mc.master_seed}
    return ExplicitConstants(A=vals["A"], l0=vals["l0"], kappa=vals["kappa"],
                             lambda_sp=vals["lambda_sp"],
                             lambda_nash=vals["lambda_nash"], method=method,
                             std_errors=ses, diagnostics=diag)


def _ensemble_functionals(p: ModelParams, mc: McConfig):
    """Desk-scale (in-memory) version of the three per-path functionals for
    general factor configurations; E_x raw-exponential, E_c martingale."""
    from .paths import FactorSpec, simulate_paths

    sample = simulate_paths(
        [FactorSpec(p.sigma_c, "martingale"),
         FactorSpec(p.sigma_x, "raw_exponential")],
        mc.grid, mc.n_paths, mc.master_seed)
    ec, ex = sample.values
    util = CobbDouglasUtility.from_params(p)
    r = p.discount_rate
    grid = mc.grid

    q = p.alpha / (1.0 - p.alpha)
    exq = ex ** (-q)
    if p.sigma_c == 0.0:
        profile = running_inf(exq)
    else:
        profile = _two_time_inf_profile_ensemble(ec, exq)
    a = util.delta * discounted_integral(profile, r, grid)

    theta = theta_path(sample, p)
    t = stieltjes_integral(np.exp(-r * grid.times) * ec, theta)

    gam_scaled = gamma_path(sample, p, 1.0)  # A = 1: integrand of A*psi_x*gamma
    g = discounted_integral(ex * gam_scaled, r, grid)

    tails = {"A": util.delta * math.exp(-r * grid.t_max) / r
                  * float(profile[:, -1].mean())}
    return g, t, a, tails


@dataclass(frozen=True)
class PolicyPair:
    """Consumption path x (per step) and cumulative contribution C for one
    agent or the aggregate.  projection_error is the worst node-snap distance
    when the pair came from a lattice solution (0 for closed-form pairs)."""

    x: np.ndarray
    contribution: MonotonePaths
    owner: str
    projection_error: float = 0.0


def sp_policy(sample: SamplePaths, consts: ExplicitConstants,
              params: ModelParams, extrema_correction: bool = False):
    """Planner solution: aggregate C* = l0*theta (atom l0 at 0) and the
    symmetric per-agent pair (x_i = (l0/n)*gamma, C_i = C*/n)."""
    p = validate(params)
    theta = theta_path(sample, p, extrema_correction)
    gam = gamma_path(sample, p, consts.A, extrema_correction)
    n = p.n_agents
    c_agg = MonotonePaths(sample.grid, consts.l0 * theta.values,
                          consts.l0 * theta.atom_at_zero)
    c_i = MonotonePaths(sample.grid, consts.l0 / n * theta.values,
                        consts.l0 / n * theta.atom_at_zero)
    agg = PolicyPair(x=consts.l0 * gam, contribution=c_agg, owner="aggregate")
    agent = PolicyPair(x=consts.l0 / n * gam, contribution=c_i,
                       owner="social_planner_agent_i")
    return agg, agent


def nash_policy(sample: SamplePaths, consts: ExplicitConstants,
                params: ModelParams, extrema_correction: bool = False):
    """Symmetric equilibrium: per agent C_i = (kappa/n)*theta, x_i =
    kappa*gamma; aggregate C = kappa*theta."""
    p = validate(params)
    theta = theta_path(sample, p, extrema_correction)
    gam = gamma_path(sample, p, consts.A, extrema_correction)
    n = p.n_agents
    c_agg = MonotonePaths(sample.grid, consts.kappa * theta.values,
                          consts.kappa * theta.atom_at_zero)
    c_i = MonotonePaths(sample.grid, consts.kappa / n * theta.values,
                        consts.kappa / n * theta.atom_at_zero)
    agg = PolicyPair(x=n * consts.kappa * gam, contribution=c_agg,
                     owner="aggregate")
    agent = PolicyPair(x=consts.kappa * gam, contribution=c_i,
                       owner="nash_agent_i")
    return agg, agent


def free_rider_ratio(params: ModelParams) -> float:
    """kappa/l0 = (a+b)/(n*a+b); independent of volatilities."""
    p = validate(params)
    return p.exponent_sum / (p.n_agents * p.alpha + p.beta)


@dataclass(frozen=True)
class ReversibleBenchmark:
    lambda_star: float
    lambda_tilde: float
    x_star_i: np.ndarray
    C_star: np.ndarray
    x_tilde_i: np.ndarray
    C_tilde: np.ndarray
    ratio: float


def reversible_benchmark(sample: SamplePaths,
                         params: ModelParams) -> ReversibleBenchmark:
    """Closed-form planner and Nash paths when contributions may be freely
    withdrawn (rental at user cost r), for sigma_c = 0 and raw E_x.

    C_star = K(lambda_star)*(n E_x)^{-q}, x_star_i = (ar/b) K(lambda_star)
    (n E_x)^{-(1-b)/(1-a-b)}; tilde versions with E_x alone; multipliers are
    pinned by the rental-form budgets (= nw aggregate, = w per agent).
    """
    p = validate(params, mode="black_scholes")
    if p.sigma_c != 0.0:
        raise ConfigError("reversible benchmark requires sigma_c = 0")
    ec, ex = _split_factors(sample)
    if ec is not None and not np.all(ec == 1.0):
        raise ConfigError("reversible benchmark requires deterministic E_c")
    spec_x = sample.specs[-1]
    if spec_x.sigma > 0.0 and spec_x.drift_convention != "raw_exponential":
        raise ConfigError("reversible benchmark assumes raw-exponential E_x")
    a, b, r, n, w = p.alpha, p.beta, p.discount_rate, p.n_agents, p.wealth
    s = 1.0 - a - b
    q = a / s
    j_disc = 1.0 / (r - 0.5 * (p.sigma_x * q) ** 2)
    k_star = n * w * b * n ** q / (r * j_disc * (a + b))
    k_tilde = w * b * n / (r * j_disc * (n * a + b))

    def lam_of_k(k):
        return k ** (-s) / ((a + b) / a * (r * a / b) ** (1.0 - a))

    pow_x = -(1.0 - b) / s
    c_star = k_star * (n * ex) ** (-q)
    x_star = (a * r / b) * k_star * (n * ex) ** pow_x
    c_tilde = k_tilde * ex ** (-q)
    x_tilde = (a * r / b) * k_tilde * ex ** pow_x
    return ReversibleBenchmark(
        lambda_star=lam_of_k(k_star), lambda_tilde=lam_of_k(k_tilde),
        x_star_i=x_star, C_star=c_star, x_tilde_i=x_tilde, C_tilde=c_tilde,
        ratio=free_rider_ratio(p))
