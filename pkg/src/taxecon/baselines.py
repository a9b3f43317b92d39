"""Baseline government and household policies.

Policies are small classes with an ``act`` method; governments map the
7-entry government observation to a 5-entry action, households map the
(n, 9) observation block to an (n, 2) action block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ModelParams
from .env import ActionBounds, GovernmentAction, SAVINGS_EPS
from .errors import ConfigError

FREE_MARKET_SPENDING_RATIO = 0.189


def free_market_action() -> GovernmentAction:
    """No taxes at all; public spending pinned at 18.9% of output."""
    return GovernmentAction(0.0, 0.0, 0.0, 0.0, FREE_MARKET_SPENDING_RATIO)


class FreeMarketGovernment:
    """Static free-market policy."""

    def act(self, gov_obs) -> np.ndarray:
        return free_market_action().as_array()


class StaticGovernment:
    """Plays one fixed action every step (e.g. a GA-optimized rule)."""

    def __init__(self, action):
        self.action = np.asarray(action, dtype=np.float64)

    def act(self, gov_obs) -> np.ndarray:
        return self.action.copy()


class RandomGovernment:
    """Uniform random instruments within the clamp bounds."""

    def __init__(self, rng, bounds: ActionBounds | None = None):
        self.rng = rng
        self.bounds = bounds or ActionBounds()

    def act(self, gov_obs) -> np.ndarray:
        lo, hi = self.bounds.lo(), self.bounds.hi()
        return lo + (hi - lo) * self.rng.random(lo.size)


def random_household_action(rng) -> np.ndarray:
    """One household action: savings ~ U(eps, 1-eps), hours ~ U(0, 1)."""
    return np.array([
        SAVINGS_EPS + (1.0 - 2.0 * SAVINGS_EPS) * rng.random(),
        rng.random(),
    ])


class RandomHouseholds:
    """Independent uniform actions for every household each step."""

    def __init__(self, n: int, rng):
        self.n = n
        self.rng = rng

    def act(self, hh_obs) -> np.ndarray:
        out = np.empty((self.n, 2))
        out[:, 0] = SAVINGS_EPS + (1.0 - 2.0 * SAVINGS_EPS) * self.rng.random(self.n)
        out[:, 1] = self.rng.random(self.n)
        return out


# -- analytic household rule -------------------------------------------------


@dataclass(frozen=True)
class HeathcoteShock:
    """Shock state of the analytic household rule.

    alpha_perm: permanent component of log ability (random walk).
    theta_shock: transitory taste/productivity shock this period.
    kappa: deterministic transitory offset (0 in this calibration).
    phi_pref: preference weight on work (0 in this calibration).
    """

    alpha_perm: float = 0.0
    theta_shock: float = 0.0
    kappa: float = 0.0
    phi_pref: float = 0.0


def heathcote_m_a(sigma_theta: float, theta: float, gamma: float) -> float:
    """Closed-form constant M^a for Gaussian transitory shocks.

    M^a = gamma/(gamma+theta) * log E[exp((1+gamma)/gamma * theta_shock)]
    with theta_shock ~ N(0, sigma_theta^2).
    """
    k = (1.0 + gamma) / gamma
    return gamma / (gamma + theta) * (k * k * sigma_theta * sigma_theta / 2.0)


def heathcote_household_action(shock: HeathcoteShock, params: ModelParams,
                               sigma_theta: float = 0.2):
    """Log-linear consumption-share and hours rule.

    Returns (consumption_share, hours), both on a natural scale (the caller
    maps them into environment actions).  With risk aversion 1 the hours
    choice is independent of the permanent component.
    """
    th, ga = params.theta, params.gamma_frisch
    m_a = heathcote_m_a(sigma_theta, th, ga)
    log_c = (-shock.phi_pref + (1.0 + ga) / (ga + th) * shock.alpha_perm + m_a)
    log_h = (-shock.phi_pref + (1.0 - th) / (ga + th) * shock.alpha_perm
             + (shock.kappa + shock.theta_shock) / ga - th / ga * m_a)
    return math.exp(log_c), math.exp(log_h)


class HeathcotePolicy:
    """Stateful analytic rule for all households.

    Each household carries a permanent random-walk component (innovations
    of scale sigma_omega) and draws a fresh transitory shock of scale
    sigma_theta each step.  The consumption share maps to a savings ratio
    through p = 1 - min(0.999, share * normalizer); hours are clamped
    into [0, 1].  The default normalizer keeps aggregate consumption
    around half of output at the calibrated wealth-to-income ratio, so
    episodes do not end in immediate over-consumption.
    """

    def __init__(self, n: int, params: ModelParams, rng,
                 sigma_theta: float = 0.2, sigma_omega: float = 0.1,
                 normalizer: float = 0.05):
        if normalizer <= 0:
            raise ConfigError("normalizer must be positive")
        self.n = n
        self.params = params
        self.rng = rng
        self.sigma_theta = sigma_theta
        self.sigma_omega = sigma_omega
        self.normalizer = normalizer
        self.alpha_perm = np.zeros(n)
        th, ga = params.theta, params.gamma_frisch
        self._m_a = heathcote_m_a(sigma_theta, th, ga)
        self._c_coef = (1.0 + ga) / (ga + th)
        self._h_coef = (1.0 - th) / (ga + th)

    def act(self, hh_obs) -> np.ndarray:
        th, ga = self.params.theta, self.params.gamma_frisch
        self.alpha_perm += self.rng.normal(0.0, self.sigma_omega, self.n)
        theta_shock = self.rng.normal(0.0, self.sigma_theta, self.n)
        c_share = np.exp(self._c_coef * self.alpha_perm + self._m_a)
        hours = np.exp(self._h_coef * self.alpha_perm + theta_shock / ga
                       - th / ga * self._m_a)
        out = np.empty((self.n, 2))
        out[:, 0] = 1.0 - np.minimum(0.999, c_share * self.normalizer)
        out[:, 1] = np.clip(hours, 0.0, 1.0)
        return out


GOVERNMENT_POLICIES = ("free", "random", "ga")
HOUSEHOLD_POLICIES = ("random", "heathcote")


def make_household_policy(name: str, n: int, params: ModelParams, rng,
                          **kwargs):
    """Instantiate a household policy by CLI name."""
    if name == "random":
        return RandomHouseholds(n, rng)
    if name == "heathcote":
        return HeathcotePolicy(n, params, rng, **kwargs)
    raise ConfigError(f"unknown household policy {name!r}; "
                      f"choose from {HOUSEHOLD_POLICIES}")
