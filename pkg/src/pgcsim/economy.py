"""Economy primitives: parameters, Cobb-Douglas utility, and its derived marginals.

The private-consumption/public-good utility is u(x, c) = x^alpha c^beta / (alpha+beta)
with alpha, beta in (0, 1) and alpha + beta < 1.  Besides the marginals u_x, u_c the
model needs two derived objects:

* g(psi, c): the inverse of x -> u_x(x, c), i.e. the consumption level at which the
  private marginal utility equals the price psi;
* h(psi, c) = u_c(g(psi, c), c): the marginal value of the public good along the
  binding private first-order condition ("reduced marginal").

Both admit closed forms; h(psi, c) = delta * psi^{alpha/(alpha-1)} * c^{(alpha+beta-1)/(1-alpha)}
with delta = (beta/alpha) * ((alpha+beta)/alpha)^{1/(alpha-1)}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FinitenessError

__all__ = ["ModelParams", "CobbDouglasUtility", "validate", "bs_exponent_margin"]


@dataclass(frozen=True)
class ModelParams:
    """Constants of the n-agent economy.

    wealth is per agent; sigma_x / sigma_c are the volatilities of the exponential
    factors driving the private-good and public-good forward prices; weights are
    the planner's Pareto weights (equal by default); horizon is the terminal time
    (infinite by default, truncated only by time grids).
    """

    n_agents: int = 2
    wealth: float = 1.0
    alpha: float = 0.3
    beta: float = 0.3
    discount_rate: float = 0.05
    sigma_x: float = 0.2
    sigma_c: float = 0.0
    weights: tuple = None
    horizon: float = math.inf

    def __post_init__(self):
        if self.weights is None:
            n = max(int(self.n_agents), 1)  # validate() rejects n < 1
            object.__setattr__(self, "weights",
                               tuple([1.0 / n] * max(int(self.n_agents), 0)))
        else:
            object.__setattr__(self, "weights", tuple(float(g) for g in self.weights))

    @property
    def exponent_sum(self) -> float:
        return self.alpha + self.beta


def bs_exponent_margin(params: ModelParams) -> float:
    """sqrt(2r) - sigma_x * alpha / (1 - alpha - beta).

    Positive iff the Black-Scholes closed-form constants (A, l0, kappa) are finite.
    """
    return math.sqrt(2.0 * params.discount_rate) - params.sigma_x * params.alpha / (
        1.0 - params.alpha - params.beta)


def validate(params: ModelParams, mode: str = "general") -> ModelParams:
    """Check the parameter invariants; returns params unchanged if they hold.

    mode="black_scholes" additionally enforces the finiteness condition
    sqrt(2r) > sigma_x*alpha/(1-alpha-beta) required by the explicit constants.

    Raises DomainError naming the violated invariant, or FinitenessError.
    """
    p = params
    if int(p.n_agents) != p.n_agents or p.n_agents < 1:
        raise DomainError(f"n_agents must be a positive integer, got {p.n_agents}")
    if not p.wealth > 0:
        raise DomainError(f"wealth must be positive, got {p.wealth}")
    if not (0.0 < p.alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {p.alpha}")
    if not (0.0 < p.beta < 1.0):
        raise DomainError(f"beta must lie in (0, 1), got {p.beta}")
    if not p.alpha + p.beta < 1.0:
        raise DomainError(
            f"alpha + beta must be < 1 for strict concavity, got {p.alpha + p.beta}")
    if not p.discount_rate > 0:
        raise DomainError(f"discount_rate must be positive, got {p.discount_rate}")
    if p.sigma_x < 0 or p.sigma_c < 0:
        raise DomainError("volatilities must be nonnegative")
    if len(p.weights) != p.n_agents:
        raise DomainError(
            f"need {p.n_agents} weights, got {len(p.weights)}")
    if any(g <= 0 for g in p.weights):
        raise DomainError("weights must be strictly positive")
    if abs(sum(p.weights) - 1.0) > 1e-12:
        raise DomainError(f"weights must sum to 1, got {sum(p.weights)}")
    if not p.horizon > 0:
        raise DomainError(f"horizon must be positive, got {p.horizon}")
    if mode == "black_scholes":
        margin = bs_exponent_margin(p)
        if margin <= 0:
            raise FinitenessError(
                "divergent constants: sqrt(2r) = "
                f"{math.sqrt(2 * p.discount_rate):.6g} must exceed "
                f"sigma_x*alpha/(1-alpha-beta) = "
                f"{p.sigma_x * p.alpha / (1 - p.alpha - p.beta):.6g}")
    elif mode != "general":
        raise DomainError(f"unknown validation mode {mode!r}")
    return p


@dataclass(frozen=True)
class CobbDouglasUtility:
    """u(x, c) = x^alpha c^beta / (alpha + beta) and its derived marginals."""

    alpha: float
    beta: float
    delta: float = field(init=False)

    def __post_init__(self):
        if not (0 < self.alpha < 1 and 0 < self.beta < 1
                and self.alpha + self.beta < 1):
            raise DomainError("need alpha, beta in (0,1) with alpha + beta < 1")
        a, b = self.alpha, self.beta
        object.__setattr__(self, "delta", (b / a) * ((a + b) / a) ** (1.0 / (a - 1.0)))

    @classmethod
    def from_params(cls, params: ModelParams) -> "CobbDouglasUtility":
        return cls(params.alpha, params.beta)

    @staticmethod
    def _check_positive(name, v):
        if np.any(np.asarray(v) <= 0):
            raise DomainError(f"{name} must be strictly positive")

    def utility(self, x, c):
        self._check_positive("x", x)
        self._check_positive("c", c)
        a, b = self.alpha, self.beta
        return x ** a * c ** b / (a + b)

    def marginal_x(self, x, c):
        """du/dx = alpha x^(alpha-1) c^beta / (alpha+beta)."""
        self._check_positive("x", x)
        self._check_positive("c", c)
        a, b = self.alpha, self.beta
        return a * x ** (a - 1.0) * c ** b / (a + b)

    def marginal_c(self, x, c):
        """du/dc = beta x^alpha c^(beta-1) / (alpha+beta)."""
        self._check_positive("x", x)
        self._check_positive("c", c)
        a, b = self.alpha, self.beta
        return b * x ** a * c ** (b - 1.0) / (a + b)

    def inverse_marginal_g(self, psi, c):
        """The x solving marginal_x(x, c) = psi."""
        self._check_positive("psi", psi)
        self._check_positive("c", c)
        a, b = self.alpha, self.beta
        return (psi * (a + b) / (a * c ** b)) ** (1.0 / (a - 1.0))

    def reduced_marginal_h(self, psi, c):
        """h(psi, c) = marginal_c(g(psi, c), c), in closed form.

        Strictly decreasing in both arguments; blows up as c -> 0 and vanishes
        as c -> infinity, which is what forces a strictly positive contribution.
        """
        self._check_positive("psi", psi)
        self._check_positive("c", c)
        a, b = self.alpha, self.beta
        return self.delta * psi ** (a / (a - 1.0)) * c ** ((a + b - 1.0) / (1.0 - a))

    # exponents used by homogeneity-based rescalings elsewhere
    @property
    def h_psi_exponent(self) -> float:
        return self.alpha / (self.alpha - 1.0)

    @property
    def h_c_exponent(self) -> float:
        return (self.alpha + self.beta - 1.0) / (1.0 - self.alpha)
