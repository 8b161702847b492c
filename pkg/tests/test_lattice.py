"""Backward-induction solver against scalar closed forms, scaling identities,
and the law of the simulated walk."""
import math

import numpy as np
import pytest
from scipy import stats

from pgcsim.economy import CobbDouglasUtility, ModelParams
from pgcsim.errors import ConfigError, GridMismatchError
from pgcsim.explicit import constants, theta_path
from pgcsim.lattice import (build_lattice, calibrate_lambda,
                            policy_from_signal, simulate_bernoulli_paths,
                            solve_signal)
from pgcsim.paths import FactorSpec, TimeGrid, simulate_paths

P = ModelParams()
P0 = ModelParams(sigma_x=0.0)
U = CobbDouglasUtility.from_params(P)


def test_degenerate_levels_match_scalar_closed_form():
    """With sigma = 0 the signal solves delta (n lam)^(a/(a-1)) l^((a+b-1)/(1-a))
    * D_k = lam at every step, D_k the midpoint-discounted remaining mass."""
    t_max, n_steps, lam = 400.0, 1600, 3.0
    lat = build_lattice(P0, TimeGrid(t_max, n_steps),
                        drift_convention="raw_exponential")
    sol = solve_signal(lat, U.reduced_marginal_h, lam, P0)
    assert sol.max_residual <= 1e-8
    a, b, r = 0.3, 0.3, 0.05
    dt = t_max / n_steps
    delta = 2.0 ** (-1.0 / 0.7)
    for k in (0, 1, 400, 1599):
        d_k = (math.exp(-r * dt / 2) * dt
               * (1 - math.exp(-r * (t_max - k * dt)))
               / (1 - math.exp(-r * dt)))
        l_ref = (lam / (delta * (2 * lam) ** (a / (a - 1)) * d_k)) \
            ** ((1 - a) / (a + b - 1))
        assert float(sol.l_star[k][0]) == pytest.approx(l_ref, rel=1e-6)


def test_degenerate_calibration_hits_closed_form_multiplier():
    # budget n*w = 2 puts the initial level at 1, where the multiplier is
    # n^-a (delta/r)^(1-a); the residual error is the O(dt) Riemann bias
    lat = build_lattice(P0, TimeGrid(400.0, 100000),
                        drift_convention="raw_exponential")
    lam, sol = calibrate_lambda(lat, U, 2.0, P0, tol=1e-6)
    delta = 2.0 ** (-1.0 / 0.7)
    oracle = 2.0 ** (-0.3) * (delta / 0.05) ** 0.7
    assert lam == pytest.approx(oracle, rel=1e-4)
    assert float(sol.l_star[0][0]) == pytest.approx(1.0, rel=1e-3)


def test_multiplier_homogeneity_on_stochastic_lattice():
    # the Cobb-Douglas pair scales exactly: l*(2 lam) = l*(lam) * 2^(-1/s)
    lat = build_lattice(P, TimeGrid(100.0, 100),
                        drift_convention="raw_exponential")
    s1 = solve_signal(lat, U.reduced_marginal_h, 3.0, P)
    s2 = solve_signal(lat, U.reduced_marginal_h, 6.0, P)
    scale = 2.0 ** (-1.0 / 0.4)
    for k in (0, 30, 99):
        np.testing.assert_allclose(s2.l_star[k], s1.l_star[k] * scale,
                                   rtol=1e-6)


def test_single_agent_game_equals_planner():
    p1 = ModelParams(n_agents=1)
    u1 = CobbDouglasUtility.from_params(p1)
    lat = build_lattice(p1, TimeGrid(50.0, 60),
                        drift_convention="raw_exponential")
    sp = solve_signal(lat, u1.reduced_marginal_h, 4.0, p1,
                      mode="social_planner")
    na = solve_signal(lat, u1.reduced_marginal_h, 4.0, p1,
                      mode="nash_symmetric")
    for k in range(60):
        np.testing.assert_allclose(na.l_star[k], sp.l_star[k], rtol=1e-12)


def test_budget_doubling_scales_multiplier():
    lat = build_lattice(P0, TimeGrid(200.0, 2000),
                        drift_convention="raw_exponential")
    lam1, _ = calibrate_lambda(lat, U, 2.0, P0, tol=1e-8)
    lam2, _ = calibrate_lambda(lat, U, 4.0, P0, tol=1e-8)
    assert lam2 / lam1 == pytest.approx(2.0 ** (-0.4), rel=1e-6)


def test_signal_tracks_ansatz_on_moderate_grid():
    exact = constants(P)
    lat = build_lattice(P, TimeGrid(400.0, 250),
                        drift_convention="raw_exponential")
    sol = solve_signal(lat, U.reduced_marginal_h, exact.lambda_sp, P)
    assert sol.max_residual <= 1e-8
    expo = P.alpha / (P.exponent_sum - 1.0)
    worst = 0.0
    for k in range(250 // 4 + 1):
        ansatz = exact.l0 * lat.ex(k) ** expo
        worst = max(worst, float(np.abs(sol.l_star[k] / ansatz - 1.0).max()))
    assert worst < 0.05


def test_refinement_does_not_worsen_ansatz_deviation():
    exact = constants(P)
    expo = P.alpha / (P.exponent_sum - 1.0)
    devs = []
    for n in (125, 250, 500):
        lat = build_lattice(P, TimeGrid(400.0, n),
                            drift_convention="raw_exponential")
        sol = solve_signal(lat, U.reduced_marginal_h, exact.lambda_sp, P)
        worst = 0.0
        for k in range(n // 4 + 1):
            ansatz = exact.l0 * lat.ex(k) ** expo
            worst = max(worst,
                        float(np.abs(sol.l_star[k] / ansatz - 1.0).max()))
        devs.append(worst)
    assert devs[1] <= devs[0] and devs[2] <= devs[1]


def test_walk_law_matches_gaussian_law_after_snapping():
    """Bernoulli-walk theta and Gaussian theta agree in law once both are
    snapped to the walk's value lattice.  Raw two-sample KS is meaningless
    here: both laws sit on offset atoms of ~7% mass, so any sub-spacing
    offset saturates the statistic regardless of sample size."""
    grid = TimeGrid(100.0, 125)
    lat = build_lattice(P, grid, drift_convention="raw_exponential")
    bern = simulate_bernoulli_paths(lat, 10000, master_seed=21)
    gauss = simulate_paths((FactorSpec(0.2, "raw_exponential"),), grid,
                           10000, master_seed=22)
    th_b = theta_path(bern, P).values[:, -1]
    th_g = theta_path(gauss, P).values[:, -1]
    step = (P.alpha / (1 - P.exponent_sum)) * P.sigma_x * math.sqrt(grid.dt)
    i_b = np.rint(np.log(th_b) / step)
    i_g = np.rint(np.log(th_g) / step)
    d = stats.ks_2samp(i_b, i_g, method="asymp").statistic
    assert d < 1.628 * math.sqrt(2.0 / 10000)  # alpha = 0.01
    # mass still at the starting level after n steps ~ sqrt(2/(pi n))
    ref = math.sqrt(2.0 / (math.pi * 125))
    assert abs(np.mean(i_b == 0) - ref) < 0.02
    assert abs(np.mean(i_g == 0) - ref) < 0.02


def test_policy_from_signal_shapes_and_guards():
    grid = TimeGrid(50.0, 80)
    lat = build_lattice(P, grid, drift_convention="raw_exponential")
    exact = constants(P)
    sol = solve_signal(lat, U.reduced_marginal_h, exact.lambda_sp, P)
    bern = simulate_bernoulli_paths(lat, 300, master_seed=2)
    pair = policy_from_signal(sol, bern)
    assert pair.owner == "aggregate"
    assert pair.projection_error <= 1e-12  # walk lands on nodes exactly
    assert np.all(np.diff(pair.contribution.values, axis=1) >= 0.0)
    assert np.all(pair.x > 0.0)
    other = simulate_paths((FactorSpec(0.2, "raw_exponential"),),
                           TimeGrid(50.0, 81), 10, master_seed=0)
    with pytest.raises(GridMismatchError):
        policy_from_signal(sol, other)


def test_solver_input_guards():
    lat = build_lattice(P, TimeGrid(10.0, 10),
                        drift_convention="raw_exponential")
    with pytest.raises(ConfigError):
        solve_signal(lat, U.reduced_marginal_h, -1.0, P)
    with pytest.raises(ConfigError):
        solve_signal(lat, U.reduced_marginal_h, 1.0, P, mode="collusion")
    with pytest.raises(ConfigError):
        calibrate_lambda(lat, U, -2.0, P)
    with pytest.raises(ConfigError):
        build_lattice(P, TimeGrid(400.0, 50000))
