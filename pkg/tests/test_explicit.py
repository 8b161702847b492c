"""Closed-form constants and policies against frozen oracles.

Reference configuration: n=2, w=1, alpha=beta=0.3, r=0.05, sigma_x=0.2.
The frozen numbers below were computed from the one-dimensional integral
representations with scipy.integrate.quad at tolerance 1e-12.
"""
import math
import warnings

import numpy as np
import pytest

from pgcsim.economy import CobbDouglasUtility, ModelParams
from pgcsim.errors import ConfigError, DivergenceWarning, FinitenessError
from pgcsim.explicit import (McConfig, analytic_A_bs, analytic_I_theta_bs,
                             constants, estimate_A_mc, free_rider_ratio,
                             gamma_path, nash_policy, reversible_benchmark,
                             sp_policy, theta_path)
from pgcsim.paths import FactorSpec, TimeGrid, simulate_paths

REF = ModelParams()

A_REF = 5.845527388135804
I_THETA_REF = 1.9023763213229121
L0_REF = 0.5256583509747431
KAPPA_REF = 0.3504389006498287
LAMBDA_SP_REF = 3.615648170230165
LAMBDA_NASH_REF = 5.235180573074555


def test_analytic_constants_frozen_values():
    assert analytic_A_bs(REF) == pytest.approx(A_REF, rel=1e-12)
    assert analytic_I_theta_bs(REF) == pytest.approx(I_THETA_REF, rel=1e-12)
    c = constants(REF)
    assert c.A == pytest.approx(A_REF, rel=1e-12)
    assert c.l0 == pytest.approx(L0_REF, rel=1e-12)
    assert c.kappa == pytest.approx(KAPPA_REF, rel=1e-12)
    assert c.lambda_sp == pytest.approx(LAMBDA_SP_REF, rel=1e-12)
    assert c.lambda_nash == pytest.approx(LAMBDA_NASH_REF, rel=1e-12)
    assert c.ratio == pytest.approx(2.0 / 3.0, rel=1e-12)


def test_multipliers_satisfy_binding_identities():
    # lambda_sp = n^-a A^(1-a) l0^(a+b-1) and the kappa analogue for the
    # equilibrium; these tie the budget-calibrated levels to the marginal
    # conditions and must hold exactly
    p, c = REF, constants(REF)
    a, b, n = p.alpha, p.beta, p.n_agents
    assert c.lambda_sp == pytest.approx(
        n ** (-a) * c.A ** (1 - a) * c.l0 ** (a + b - 1), rel=1e-12)
    assert c.lambda_nash == pytest.approx(
        c.A ** (1 - a) * c.kappa ** (a + b - 1), rel=1e-12)


def test_single_agent_collapse():
    c1 = constants(ModelParams(n_agents=1))
    assert c1.l0 == pytest.approx(c1.kappa, rel=1e-14)
    assert c1.lambda_sp == pytest.approx(c1.lambda_nash, rel=1e-14)
    assert c1.ratio == pytest.approx(1.0, rel=1e-14)
    assert c1.l0 == pytest.approx(0.26282917548737156, rel=1e-12)


def test_free_rider_ratio_formula():
    assert free_rider_ratio(ModelParams(n_agents=8)) == pytest.approx(
        0.6 / (8 * 0.3 + 0.3), rel=1e-14)
    # independent of the volatilities
    assert free_rider_ratio(ModelParams(sigma_x=0.4)) == pytest.approx(
        free_rider_ratio(ModelParams(sigma_x=0.05)), rel=1e-15)


def test_constants_requires_finiteness():
    with pytest.raises(FinitenessError):
        constants(ModelParams(sigma_x=0.9))
    with pytest.raises(ConfigError):
        constants(ModelParams(sigma_c=0.1))  # analytic route needs sigma_c=0


def test_monte_carlo_constants_match_analytic():
    mc = McConfig(grid=TimeGrid(200.0, 4000), n_paths=3000, master_seed=2,
                  extrema_correction=True)
    est = constants(REF, method="monte_carlo", mc=mc)
    exact = constants(REF)
    for name in ("A", "l0", "kappa", "lambda_sp", "lambda_nash"):
        err = abs(getattr(est, name) - getattr(exact, name))
        assert err < 3.0 * est.std_errors[name], name
    assert abs(est.ratio - 2 / 3) < 3.0 * est.std_errors["ratio"]


def test_estimate_A_mc_two_factor():
    p = ModelParams(sigma_c=0.1)
    s = simulate_paths((FactorSpec(0.1, "martingale"),
                        FactorSpec(0.2, "raw_exponential")),
                       TimeGrid(200.0, 2000), 800, master_seed=3)
    est = estimate_A_mc(s, p)
    assert math.isfinite(est.mean) and est.mean > 1.0
    assert est.std_error > 0.0


def test_divergence_warning_near_margin():
    p = ModelParams(sigma_x=0.42)  # margin barely positive, heavy tails
    mc = McConfig(grid=TimeGrid(200.0, 2000), n_paths=100, master_seed=0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        constants(p, method="monte_carlo", mc=mc)
    assert any(issubclass(w.category, DivergenceWarning) for w in caught)


SAMPLE = simulate_paths((FactorSpec(0.2, "raw_exponential"),),
                        TimeGrid(50.0, 1000), 200, master_seed=7)


def test_theta_path_structure():
    theta = theta_path(SAMPLE, REF).values
    assert np.all(theta[:, 0] == 1.0)
    assert np.all(theta >= 1.0)
    assert np.all(np.diff(theta, axis=1) >= 0.0)
    # running sup of the candidate E_x^(-a/s)
    cand = SAMPLE.values[0] ** (-0.3 / 0.4)
    np.testing.assert_allclose(
        theta, np.maximum.accumulate(np.maximum(cand, 1.0), axis=1),
        rtol=1e-12)


def test_extrema_correction_shifts_up():
    theta = theta_path(SAMPLE, REF).values
    theta_c = theta_path(SAMPLE, REF, extrema_correction=True).values
    assert np.all(theta_c[:, 0] == 1.0)
    assert np.all(theta_c[:, 1:] >= theta[:, 1:] - 1e-15)
    # the corrected infimum is lower and enters gamma at a negative power,
    # so gamma moves up together with theta
    gam = gamma_path(SAMPLE, REF, A_REF)
    gam_c = gamma_path(SAMPLE, REF, A_REF, extrema_correction=True)
    assert np.all(gam_c[:, 1:] >= gam[:, 1:] - 1e-15)


@pytest.mark.parametrize("correction", [False, True])
def test_planner_policy_binding_line(correction):
    """u_x(x_i, C) = n lambda E_x pathwise for the planner pair; the extrema
    correction moves theta and gamma together so the identity survives it."""
    c = constants(REF)
    agg, agent = sp_policy(SAMPLE, c, REF, extrema_correction=correction)
    u = CobbDouglasUtility.from_params(REF)
    ex = SAMPLE.values[0]
    lhs = u.marginal_x(agent.x, agg.contribution.values)
    np.testing.assert_allclose(lhs, 2 * c.lambda_sp * ex, rtol=1e-10)


def test_nash_policy_binding_line():
    c = constants(REF)
    agg, agent = nash_policy(SAMPLE, c, REF)
    u = CobbDouglasUtility.from_params(REF)
    ex = SAMPLE.values[0]
    np.testing.assert_allclose(
        u.marginal_x(agent.x, agg.contribution.values),
        c.lambda_nash * ex, rtol=1e-10)


def test_policy_shapes_and_ordering():
    c = constants(REF)
    sp_agg, sp_agent = sp_policy(SAMPLE, c, REF)
    na_agg, na_agent = nash_policy(SAMPLE, c, REF)
    # planner provides more public good, each agent privately consumes less
    assert np.all(sp_agg.contribution.values >= na_agg.contribution.values)
    assert np.all(na_agent.x >= sp_agent.x)
    np.testing.assert_allclose(sp_agg.contribution.values[:, 0], c.l0)
    np.testing.assert_allclose(na_agg.contribution.values[:, 0], c.kappa)
    np.testing.assert_allclose(
        sp_agent.contribution.values * 2, sp_agg.contribution.values,
        rtol=1e-12)


def test_reversible_benchmark_ratio_and_shape():
    bench = reversible_benchmark(SAMPLE, REF)
    assert bench.ratio == pytest.approx(2.0 / 3.0, rel=1e-12)
    share = bench.C_tilde / bench.C_star
    np.testing.assert_allclose(share, bench.ratio, rtol=1e-10)
    assert bench.lambda_tilde > bench.lambda_star


def test_reversible_rejects_wrong_conventions():
    s = simulate_paths((FactorSpec(0.2, "martingale"),), TimeGrid(5.0, 50),
                       10, master_seed=0)
    with pytest.raises(ConfigError):
        reversible_benchmark(s, REF)
