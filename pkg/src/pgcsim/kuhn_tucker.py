"""Monte Carlo checks of the stochastic first-order conditions.

A candidate policy (x, C) with multiplier lambda is tested against four
lines.  Writing psi_x(t) = e^{-rt}E_x(t), psi_c(t) = e^{-rt}E_c(t) and

    Psi(t) = E[ int_t^T e^{-rs} sum_i g_i h(lambda/g_i * E_x(s), C(s)) ds | F_t ]

for Pareto weights g_i (g_i = 1, one term, for a single agent facing the
aggregate C), the lines are

    budget:    E[ int psi_x x dt + int psi_c dC ]  =  target
    bound:     Psi(t) <= lambda psi_c(t)           for every grid time t < T
    flat-off:  E[ int (Psi - lambda psi_c) dC ]    =  0
    binding:   g_i u_x(x_i, C) = lambda psi_x e^{rt}   pathwise

The bound needs conditional expectations: they are estimated by restarting
fresh path suffixes from each prefix state (valid because the drivers have
stationary independent increments) with suffix noise shared across prefixes.
The flat-off line does not: dC is adapted, so the conditional expectation
inside can be replaced by the raw tail integral Phi(t) = int_t^T e^{-rs}
(sum_i g_i h^i) ds path by path without bias.

Statistical gates are 3 standard errors throughout; the binding line is an
algebraic identity and gets a hard relative tolerance instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import path_rng
from .economy import CobbDouglasUtility, ModelParams, validate
from .errors import ConfigError
from .paths import (SamplePaths, McEstimate, discounted_integral, mc_estimate,
                    stieltjes_integral)

# keeps verifier suffixes out of the ensemble's own per-path seed range
_SUFFIX_SEED_OFFSET = 7919

_SCAN_FRACTIONS = (0.0, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75)


@dataclass(frozen=True)
class FocReport:
    """Residuals of the four first-order-condition lines.

    max_inequality_violation is signed (positive = the price bound is
    broken) and comes with the grid step/time where the scan attained it;
    verdict is "pass" iff budget and flat-off are within 3 standard errors
    of zero, the worst bound violation is below 3 standard errors, and the
    binding line holds to binding_tol relative."""

    budget_residual: float
    budget_se: float
    max_inequality_violation: float
    inequality_se: float
    violation_step: int
    violation_time: float
    flatoff_residual: float
    flatoff_se: float
    binding_foc_max_relerr: float
    binding_tol: float
    verdict: str


def _finish_report(budget, budget_se, viol, viol_se, step, time, flat,
                   flat_se, binding, tol) -> FocReport:
    ok = (abs(budget) <= 3.0 * budget_se
          and viol <= 3.0 * viol_se
          and abs(flat) <= 3.0 * flat_se
          and np.isfinite(binding) and binding <= tol)
    return FocReport(budget_residual=budget, budget_se=budget_se,
                     max_inequality_violation=viol, inequality_se=viol_se,
                     violation_step=step, violation_time=time,
                     flatoff_residual=flat, flatoff_se=flat_se,
                     binding_foc_max_relerr=binding, binding_tol=tol,
                     verdict="pass" if ok else "fail")


def _factor_values(sample: SamplePaths):
    """(E_c values or None, E_x values) under the factor-order convention."""
    if len(sample.values) == 1:
        return None, sample.values[0]
    return sample.values[0], sample.values[1]


def _weighted_h(utility, weights, lam, ex, c):
    w0 = weights[0]
    if all(abs(w - w0) < 1e-15 for w in weights):
        return len(weights) * w0 * utility.reduced_marginal_h(lam / w0 * ex, c)
    return sum(w * utility.reduced_marginal_h(lam / w * ex, c)
               for w in weights)


def _tail_flow(utility, weights, lam, sample, contribution, r):
    """Phi[:, k] = sum_{j>=k} e^{-r(t_j+dt/2)} H(t_j) dt (midpoint-discounted
    tail of the weighted h flow); Phi[:, n_steps] = 0."""
    grid = sample.grid
    _, ex = _factor_values(sample)
    h = _weighted_h(utility, weights, lam, ex[:, :-1],
                    contribution.values[:, :-1])
    term = h * (np.exp(-r * (grid.times[:-1] + 0.5 * grid.dt)) * grid.dt)
    phi = np.zeros((term.shape[0], grid.n_steps + 1))
    phi[:, :-1] = term[:, ::-1].cumsum(axis=1)[:, ::-1]
    return phi


def _psi_c(sample: SamplePaths, r: float):
    ec, _ = _factor_values(sample)
    disc = np.exp(-r * sample.grid.times)
    return disc[None, :] if ec is None else disc * ec


def _grid_index(grid, t: float) -> int:
    k = t / grid.dt
    k_round = int(round(k))
    if abs(k - k_round) > 1e-9 * max(1.0, abs(k)) or not 0 <= k_round <= grid.n_steps:
        raise ConfigError(f"t = {t} is not a grid time of {grid}")
    return k_round


def _suffix_brownians(ensemble: SamplePaths, k: int, n_suffixes: int,
                      seed: int):
    """Fresh driver increments beyond step k, identical for every prefix."""
    grid = ensemble.grid
    n_drv = 1 if ensemble.shared_driver else len(ensemble.specs)
    m = grid.n_steps - k
    suf = np.empty((n_drv, n_suffixes, m))
    for j in range(n_suffixes):
        rng = path_rng(seed, j)
        suf[:, j, :] = rng.standard_normal((n_drv, m))
    suf = suf.cumsum(axis=2)
    suf *= math.sqrt(grid.dt)
    return suf


def _conditional_tail_means(ensemble, policy, utility, weights, lam, r, k,
                            n_prefixes, n_suffixes, seed):
    """Per-prefix (mean, std error) of Phi(t_k) over restarted suffixes."""
    grid = ensemble.grid
    times = grid.times
    suf = _suffix_brownians(ensemble, k, n_suffixes, seed)
    n_drv = suf.shape[0]
    means = np.empty(n_prefixes)
    ses = np.empty(n_prefixes)
    drivers = (ensemble.brownian[:1] if ensemble.shared_driver
               else ensemble.brownian)
    for i in range(n_prefixes):
        combined = []
        for d in range(n_drv):
            wd = np.empty((n_suffixes, grid.n_steps + 1))
            wd[:, :k + 1] = drivers[d][i, :k + 1]
            wd[:, k + 1:] = drivers[d][i, k] + suf[d]
            combined.append(wd)
        values, brownian = [], []
        for j, spec in enumerate(ensemble.specs):
            wd = combined[0] if ensemble.shared_driver else combined[j]
            brownian.append(wd)
            values.append(spec.values_from_brownian(wd, times))
        sample = SamplePaths(grid=grid, specs=ensemble.specs,
                             values=tuple(values), brownian=tuple(brownian),
                             master_seed=seed,
                             shared_driver=ensemble.shared_driver)
        pair = policy(sample)
        phi_k = _tail_flow(utility, weights, lam, sample,
                           pair.contribution, r)[:, k]
        means[i] = phi_k.mean()
        ses[i] = phi_k.std(ddof=1) / math.sqrt(n_suffixes)
    return means, ses


def supergradient_estimate(ensemble: SamplePaths, policy, params: ModelParams,
                           lam: float, t: float, weights=None,
                           n_prefixes: int = 48, n_suffixes: int = 192,
                           suffix_seed=None) -> McEstimate:
    """E[ int_t^T e^{-rs} sum_i g_i h(lambda/g_i E_x, C) ds | F_t ], averaged
    over the F_t states of the first n_prefixes ensemble paths.

    policy maps a SamplePaths ensemble deterministically to a PolicyPair, so
    conditioning on F_t is realised by re-running it on prefix + fresh-suffix
    paths.  At t = 0 the ensemble itself is the suffix set; at t = t_max the
    integral is empty."""
    p = validate(params)
    utility = CobbDouglasUtility.from_params(p)
    if weights is None:
        weights = p.weights
    grid = ensemble.grid
    k = _grid_index(grid, t)
    if k == grid.n_steps:
        return McEstimate(mean=0.0, std_error=0.0, n_paths=ensemble.n_paths)
    if k == 0:
        pair = policy(ensemble)
        phi = _tail_flow(utility, weights, lam, ensemble, pair.contribution,
                         p.discount_rate)
        return mc_estimate(phi[:, 0])
    if suffix_seed is None:
        suffix_seed = ensemble.master_seed + _SUFFIX_SEED_OFFSET
    n_prefixes = min(n_prefixes, ensemble.n_paths)
    means, _ = _conditional_tail_means(ensemble, policy, utility, weights,
                                       lam, p.discount_rate, k, n_prefixes,
                                       n_suffixes, suffix_seed)
    return mc_estimate(means)


def _scan_steps(grid, fractions):
    ks = sorted({int(round(f * grid.n_steps)) for f in fractions})
    return [k for k in ks if 0 <= k < grid.n_steps]


def _bound_scan(ensemble, policy, utility, weights, lam, r, fractions,
                n_prefixes, n_suffixes, seed):
    """Worst signed violation of Psi <= lambda psi_c over the scan mesh."""
    grid = ensemble.grid
    psi_c = _psi_c(ensemble, r)
    n_prefixes = min(n_prefixes, ensemble.n_paths)
    worst = -math.inf
    worst_se = 0.0
    worst_k = 0
    for k in _scan_steps(grid, fractions):
        if k == 0:
            pair = policy(ensemble)
            phi = _tail_flow(utility, weights, lam, ensemble,
                             pair.contribution, r)
            est = mc_estimate(phi[:, 0] - lam * psi_c[:, 0])
            cand, cand_se = est.mean, est.std_error
        else:
            means, ses = _conditional_tail_means(
                ensemble, policy, utility, weights, lam, r, k, n_prefixes,
                n_suffixes, seed)
            gaps = means - lam * psi_c[:n_prefixes, k]
            i = int(np.argmax(gaps))
            cand, cand_se = float(gaps[i]), float(ses[i])
        if cand > worst:
            worst, worst_se, worst_k = cand, cand_se, k
    return worst, worst_se, worst_k, worst_k * grid.dt


def _spend(pair, ensemble, r):
    _, ex = _factor_values(ensemble)
    return (discounted_integral(ex * pair.x, r, ensemble.grid)
            + stieltjes_integral(_psi_c(ensemble, r), pair.contribution))


def check_budget(policy_pair, target: float, ensemble: SamplePaths,
                 params: ModelParams) -> McEstimate:
    """MC estimate of int psi_x x dt + int psi_c dC minus target for a policy
    already evaluated on the ensemble."""
    p = validate(params)
    if policy_pair.contribution.grid != ensemble.grid:
        raise ConfigError("policy grid differs from ensemble grid")
    return mc_estimate(_spend(policy_pair, ensemble, p.discount_rate)
                       - target)


def _implied_multiplier_gap(pair, ensemble, utility, weights, lam, n_agents,
                            aggregate_c=None):
    """Worst relative error of g_i u_x(x_i, C) against lambda E_x.

    For the planner's aggregate pair the interior allocation is the unique
    split with equalised weighted marginals, x_i proportional to
    g_i^{1/(1-alpha)}; any one agent then witnesses the common multiplier."""
    _, ex = _factor_values(ensemble)
    c = pair.contribution.values if aggregate_c is None else aggregate_c
    if pair.owner == "aggregate":
        shares = np.array([w ** (1.0 / (1.0 - utility.alpha))
                           for w in weights])
        x1 = (shares[0] / shares.sum()) * pair.x
        w1 = weights[0]
    else:
        x1, w1 = pair.x, 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = w1 * utility.marginal_x(x1, c) / ex
        rel = np.abs(mu / lam - 1.0)
    if not np.all(np.isfinite(rel)):
        return math.inf
    return float(rel.max())


def check_foc_social(ensemble: SamplePaths, policy, consts,
                     params: ModelParams, tol: float = 1e-8, lam=None,
                     scan_fractions=_SCAN_FRACTIONS, n_prefixes: int = 48,
                     n_suffixes: int = 192, suffix_seed=None) -> FocReport:
    """Verify the planner first-order conditions for a candidate policy.

    policy: SamplePaths -> PolicyPair for the aggregate (nondecreasing C,
    positive x summed over agents).  The multiplier defaults to
    consts.lambda_sp; the budget target is n*w.  Failures are verdicts, not
    errors."""
    p = validate(params)
    utility = CobbDouglasUtility.from_params(p)
    if lam is None:
        lam = consts.lambda_sp
    r = p.discount_rate
    if suffix_seed is None:
        suffix_seed = ensemble.master_seed + _SUFFIX_SEED_OFFSET

    pair = policy(ensemble)
    spend = _spend(pair, ensemble, r)
    budget = mc_estimate(spend - p.n_agents * p.wealth)

    phi = _tail_flow(utility, p.weights, lam, ensemble, pair.contribution, r)
    flat_per_path = stieltjes_integral(phi - lam * _psi_c(ensemble, r),
                                       pair.contribution)
    flat = mc_estimate(flat_per_path)

    viol, viol_se, k_at, t_at = _bound_scan(
        ensemble, policy, utility, p.weights, lam, r, scan_fractions,
        n_prefixes, n_suffixes, suffix_seed)

    binding = _implied_multiplier_gap(pair, ensemble, utility, p.weights,
                                      lam, p.n_agents)
    return _finish_report(budget.mean, budget.std_error, viol, viol_se,
                          k_at, t_at, flat.mean, flat.std_error, binding, tol)


def check_foc_nash(ensemble: SamplePaths, policy_i, aggregate_policy,
                   params: ModelParams, tol: float = 1e-8, lam=None,
                   scan_fractions=_SCAN_FRACTIONS, n_prefixes: int = 48,
                   n_suffixes: int = 192, suffix_seed=None) -> FocReport:
    """Verify one agent's first-order conditions in the contribution game.

    policy_i yields the agent's own pair (x_i, C_i); aggregate_policy yields
    the total contribution entering the agent's h and u_x arguments.  The
    multiplier defaults to the symmetric-equilibrium lambda of the analytic
    constants; the budget target is w."""
    p = validate(params)
    utility = CobbDouglasUtility.from_params(p)
    if lam is None:
        from .explicit import constants
        lam = constants(p).lambda_nash
    r = p.discount_rate
    if suffix_seed is None:
        suffix_seed = ensemble.master_seed + _SUFFIX_SEED_OFFSET
    weights = (1.0,)

    own = policy_i(ensemble)
    agg = aggregate_policy(ensemble)
    spend = _spend(own, ensemble, r)
    budget = mc_estimate(spend - p.wealth)

    phi = _tail_flow(utility, weights, lam, ensemble, agg.contribution, r)
    flat_per_path = stieltjes_integral(phi - lam * _psi_c(ensemble, r),
                                       own.contribution)
    flat = mc_estimate(flat_per_path)

    viol, viol_se, k_at, t_at = _bound_scan(
        ensemble, aggregate_policy, utility, weights, lam, r, scan_fractions,
        n_prefixes, n_suffixes, suffix_seed)

    binding = _implied_multiplier_gap(own, ensemble, utility, weights, lam,
                                      p.n_agents,
                                      aggregate_c=agg.contribution.values)
    return _finish_report(budget.mean, budget.std_error, viol, viol_se,
                          k_at, t_at, flat.mean, flat.std_error, binding, tol)
