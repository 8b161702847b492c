"""Verifier checks on the closed-form policies and on deliberate violations.

The supergradient scans use prefix-restart estimates with common random
numbers for the suffixes, so repeated calls are bit-identical.
"""
import numpy as np
import pytest

from pgcsim.economy import CobbDouglasUtility, ModelParams
from pgcsim.errors import ConfigError
from pgcsim.explicit import PolicyPair, constants, nash_policy, sp_policy
from pgcsim.kuhn_tucker import (check_budget, check_foc_nash,
                                check_foc_social, supergradient_estimate)
from pgcsim.paths import (FactorSpec, MonotonePaths, TimeGrid, simulate_paths)

P = ModelParams()
CONSTS = constants(P)
GRID = TimeGrid(240.0, 4800)
ENS = simulate_paths((FactorSpec(0.2, "raw_exponential"),), GRID, 2000,
                     master_seed=11)
SCAN = (0.0, 0.1, 0.35, 0.75)
MESH = dict(scan_fractions=SCAN, n_prefixes=32, n_suffixes=128)


def sp_agg(s):
    return sp_policy(s, CONSTS, P, extrema_correction=True)[0]


def sp_agent(s):
    return sp_policy(s, CONSTS, P, extrema_correction=True)[1]


def nash_agent(s):
    return nash_policy(s, CONSTS, P, extrema_correction=True)[1]


def nash_agg(s):
    return nash_policy(s, CONSTS, P, extrema_correction=True)[0]


def test_supergradient_vanishes_at_terminal_time():
    est = supergradient_estimate(ENS, sp_agg, P, CONSTS.lambda_sp, 240.0)
    assert est.mean == 0.0 and est.std_error == 0.0


def test_supergradient_at_zero_equals_multiplier_price():
    # at t = 0 the planner bound binds: Psi(0) = lambda * psi_c(0) = lambda
    est = supergradient_estimate(ENS, sp_agg, P, CONSTS.lambda_sp, 0.0)
    assert abs(est.mean - CONSTS.lambda_sp) < 3.0 * est.std_error
    assert est.std_error < 0.05


def test_supergradient_scales_exactly_in_lambda():
    # h is homogeneous of degree a/(a-1) in its price argument and the
    # policy is held fixed, so doubling lambda rescales Psi exactly
    lam = CONSTS.lambda_sp
    e1 = supergradient_estimate(ENS, sp_agg, P, lam, 12.0, n_prefixes=8,
                                n_suffixes=32)
    e2 = supergradient_estimate(ENS, sp_agg, P, 2 * lam, 12.0, n_prefixes=8,
                                n_suffixes=32)
    assert e2.mean == pytest.approx(e1.mean * 2.0 ** (0.3 / -0.7), rel=1e-12)


def test_supergradient_rejects_off_grid_time():
    with pytest.raises(ConfigError):
        supergradient_estimate(ENS, sp_agg, P, 1.0, 0.037)


def test_supergradient_deterministic_given_seed():
    e1 = supergradient_estimate(ENS, sp_agg, P, 1.0, 24.0, n_prefixes=8,
                                n_suffixes=32)
    e2 = supergradient_estimate(ENS, sp_agg, P, 1.0, 24.0, n_prefixes=8,
                                n_suffixes=32)
    assert e1 == e2


def test_social_planner_closed_form_passes():
    report = check_foc_social(ENS, sp_agg, CONSTS, P, **MESH)
    assert report.verdict == "pass", report
    assert report.binding_foc_max_relerr < 1e-12
    assert abs(report.budget_residual) <= 3 * report.budget_se
    assert report.max_inequality_violation <= 3 * report.inequality_se
    assert abs(report.flatoff_residual) <= 3 * report.flatoff_se


def test_nash_closed_form_passes():
    report = check_foc_nash(ENS, nash_agent, nash_agg, P, **MESH)
    assert report.verdict == "pass", report


def test_scaled_up_contribution_fails_flat_off():
    """1.1x the optimal contribution keeps every FOC line except flat-off:
    the policy now pays for increments where the bound is strictly slack."""
    u = CobbDouglasUtility.from_params(P)
    lam = CONSTS.lambda_sp

    def perturbed(s):
        base = sp_agg(s)
        c = MonotonePaths(s.grid, 1.1 * base.contribution.values,
                          1.1 * base.contribution.atom_at_zero)
        x = 2 * u.inverse_marginal_g(2 * lam * s.values[0], c.values)
        return PolicyPair(x=x, contribution=c, owner="aggregate")

    report = check_foc_social(ENS, perturbed, CONSTS, P, **MESH)
    assert report.verdict == "fail"
    assert report.flatoff_residual < -3 * report.flatoff_se
    assert report.binding_foc_max_relerr < 1e-12  # x was re-solved to bind


def test_planner_policy_fails_nash_check():
    report = check_foc_nash(ENS, sp_agent, sp_agg, P, **MESH)
    assert report.verdict == "fail"


def test_token_contribution_violates_price_bound():
    # an agent who barely contributes leaves the marginal value of the
    # public good far above its price
    def token(s):
        c = MonotonePaths(s.grid, np.full((s.n_paths, s.grid.n_steps + 1),
                                          1e-6), np.full(s.n_paths, 1e-6))
        return PolicyPair(x=np.ones_like(s.values[0]), contribution=c,
                          owner="aggregate")

    report = check_foc_social(ENS, token, CONSTS, P, scan_fractions=(0.0,),
                              n_prefixes=8, n_suffixes=16)
    assert report.verdict == "fail"
    assert report.max_inequality_violation > 3 * report.inequality_se
    assert report.max_inequality_violation > 0


def test_single_agent_nash_coincides_with_planner():
    p1 = ModelParams(n_agents=1)
    c1 = constants(p1)
    assert c1.lambda_sp == pytest.approx(c1.lambda_nash, rel=1e-14)
    ens = simulate_paths((FactorSpec(0.2, "raw_exponential"),), GRID, 800,
                         master_seed=13)

    def agg(s):
        return sp_policy(s, c1, p1, extrema_correction=True)[0]

    def agent(s):
        return nash_policy(s, c1, p1, extrema_correction=True)[1]

    social = check_foc_social(ens, agg, c1, p1, scan_fractions=(0.0, 0.35),
                              n_prefixes=16, n_suffixes=64)
    nash = check_foc_nash(ens, agent, agg, p1, scan_fractions=(0.0, 0.35),
                          n_prefixes=16, n_suffixes=64)
    assert social.verdict == "pass", social
    assert nash.verdict == "pass", nash


def test_check_budget_zero_policy_is_minus_target():
    grid = TimeGrid(10.0, 50)
    ens = simulate_paths((FactorSpec(0.2, "raw_exponential"),), grid, 40,
                         master_seed=1)
    zero = PolicyPair(
        x=np.zeros((40, 51)),
        contribution=MonotonePaths(grid, np.zeros((40, 51)), np.zeros(40)),
        owner="aggregate")
    est = check_budget(zero, 2.0, ens, P)
    assert est.mean == -2.0 and est.std_error == 0.0


def test_check_budget_planner_spends_total_wealth():
    pair = sp_agg(ENS)
    est = check_budget(pair, P.n_agents * P.wealth, ENS, P)
    assert abs(est.mean) < 3 * est.std_error


def test_check_budget_grid_mismatch():
    other = simulate_paths((FactorSpec(0.2, "raw_exponential"),),
                           TimeGrid(10.0, 50), 40, master_seed=1)
    with pytest.raises(ConfigError):
        check_budget(sp_agg(ENS), 2.0, other, P)


def test_full_report_deterministic():
    r1 = check_foc_social(ENS, sp_agg, CONSTS, P, scan_fractions=(0.0, 0.35),
                          n_prefixes=8, n_suffixes=32)
    r2 = check_foc_social(ENS, sp_agg, CONSTS, P, scan_fractions=(0.0, 0.35),
                          n_prefixes=8, n_suffixes=32)
    assert r1 == r2
