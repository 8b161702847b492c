import math

import numpy as np
import pytest

from pgcsim.economy import (CobbDouglasUtility, ModelParams,
                            bs_exponent_margin, validate)
from pgcsim.errors import DomainError, FinitenessError

REF = ModelParams()  # n=2, w=1, alpha=beta=0.3, r=0.05, sigma_x=0.2


def test_utility_reference_value():
    u = CobbDouglasUtility(0.3, 0.3)
    assert u.utility(4.0, 1.0) == pytest.approx(2.526194277517330, abs=1e-14)


def test_delta_closed_form():
    # alpha = beta makes delta collapse to 2^(1/(alpha-1))
    u = CobbDouglasUtility(0.3, 0.3)
    assert u.delta == pytest.approx(2.0 ** (-1.0 / 0.7), rel=1e-14)
    assert u.delta == pytest.approx(0.3714985722842371, abs=1e-15)


def test_marginals_match_finite_differences():
    u = CobbDouglasUtility(0.35, 0.25)
    x, c, eps = 1.7, 0.9, 1e-6
    fx = (u.utility(x + eps, c) - u.utility(x - eps, c)) / (2 * eps)
    fc = (u.utility(x, c + eps) - u.utility(x, c - eps)) / (2 * eps)
    assert u.marginal_x(x, c) == pytest.approx(fx, rel=1e-8)
    assert u.marginal_c(x, c) == pytest.approx(fc, rel=1e-8)


def test_inverse_marginal_identity():
    u = CobbDouglasUtility(0.3, 0.3)
    x = np.array([0.1, 0.7, 2.0, 11.0])
    c = np.array([0.4, 1.0, 3.0, 0.2])
    np.testing.assert_allclose(u.inverse_marginal_g(u.marginal_x(x, c), c),
                               x, rtol=1e-12)


def test_reduced_marginal_two_routes():
    u = CobbDouglasUtility(0.28, 0.41)
    psi = np.array([0.2, 1.0, 4.5])
    c = np.array([0.3, 1.3, 2.0])
    via_g = u.marginal_c(u.inverse_marginal_g(psi, c), c)
    np.testing.assert_allclose(u.reduced_marginal_h(psi, c), via_g,
                               rtol=1e-12)


def test_euler_homogeneity():
    u = CobbDouglasUtility(0.3, 0.3)
    x, c = 1.9, 0.6
    lhs = x * u.marginal_x(x, c) + c * u.marginal_c(x, c)
    assert lhs == pytest.approx((u.alpha + u.beta) * u.utility(x, c),
                                rel=1e-13)


def test_inada_blowup_in_c():
    u = CobbDouglasUtility(0.3, 0.3)
    small = u.reduced_marginal_h(1.0, 1e-12)
    assert small > 1e6
    assert u.reduced_marginal_h(1.0, 1e-14) > small


def test_positive_domain_enforced():
    u = CobbDouglasUtility(0.3, 0.3)
    with pytest.raises(DomainError):
        u.utility(0.0, 1.0)
    with pytest.raises(DomainError):
        u.marginal_c(1.0, -2.0)
    with pytest.raises(DomainError):
        u.reduced_marginal_h(1.0, 0.0)
    with pytest.raises(DomainError):
        CobbDouglasUtility(0.6, 0.5)


def test_params_defaults_and_weights():
    assert REF.weights == (0.5, 0.5)
    assert REF.exponent_sum == pytest.approx(0.6)
    p3 = ModelParams(n_agents=3)
    assert p3.weights == (1 / 3, 1 / 3, 1 / 3)


def test_validate_rejections():
    with pytest.raises(DomainError):
        validate(ModelParams(alpha=0.7, beta=0.5))
    with pytest.raises(DomainError):
        validate(ModelParams(wealth=-1.0))
    with pytest.raises(DomainError):
        validate(ModelParams(n_agents=0))
    with pytest.raises(DomainError):
        validate(ModelParams(weights=(0.7, 0.2)))
    with pytest.raises(DomainError):
        validate(REF, mode="nonsense")


def test_black_scholes_margin():
    assert bs_exponent_margin(REF) == pytest.approx(
        math.sqrt(0.1) - 0.2 * 0.3 / 0.4, rel=1e-12)
    validate(REF, mode="black_scholes")
    with pytest.raises(FinitenessError):
        validate(ModelParams(sigma_x=0.9), mode="black_scholes")
