"""Irreversible public-good contribution under uncertainty.

Closed-form planner and Nash policies for Cobb-Douglas economies driven by
exponential Brownian factors, a lattice solver for the signal-process backward
equation, Monte Carlo verification of the stochastic Kuhn-Tucker conditions,
and the free-rider ratio experiments, all behind the ``pgcsim`` CLI.
"""
from .economy import CobbDouglasUtility, ModelParams, bs_exponent_margin, validate
from .errors import (BracketError, ConfigError, DivergenceWarning, DomainError,
                     FinitenessError, GridMismatchError, MonotonicityError,
                     ToleranceError)
from .explicit import (ExplicitConstants, McConfig, PolicyPair,
                       ReversibleBenchmark, analytic_A_bs,
                       analytic_I_gamma_bs, analytic_I_theta_bs, constants,
                       estimate_A_mc, free_rider_ratio, gamma_path,
                       nash_policy, reversible_benchmark, sp_policy,
                       theta_path)
from .kuhn_tucker import (FocReport, check_budget, check_foc_nash,
                          check_foc_social, supergradient_estimate)
from .lattice import (Lattice, SignalSolution, build_lattice, calibrate_lambda,
                      policy_from_signal, simulate_bernoulli_paths,
                      solve_signal)
from .paths import (FactorSpec, McEstimate, MonotonePaths, SamplePaths,
                    TimeGrid, default_t_max, discounted_integral,
                    exp_sup_estimate, mc_estimate, running_inf, running_sup,
                    sample_exponential_time, simulate_paths, stieltjes_integral,
                    two_time_inf, two_time_inf_profile)

__version__ = "0.1.0"
