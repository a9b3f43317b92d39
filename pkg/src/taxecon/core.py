"""Economic primitives: parameters, tax schedules, and the per-step equations.

Everything here is a pure function over scalars or numpy arrays; the
environment composes them into a step loop.  Array arguments are applied
elementwise, scalar arguments return Python floats.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CapitalExhaustedError,
    BankruptcyError,
    ConfigError,
    DegenerateMarketError,
    DomainError,
)


class Regime(enum.IntEnum):
    """Productivity regime of a household."""

    NORMAL = 0
    SUPERSTAR = 1


@dataclass(frozen=True)
class ModelParams:
    """Structural parameters of the economy.

    theta: relative risk aversion (theta == 1 selects log consumption utility).
    gamma_frisch: inverse Frisch elasticity (labor disutility curvature).
    beta: discount factor.
    alpha: capital share in production.
    delta: capital depreciation rate.
    r_save: deposit interest rate, held constant.
    tau_s: proportional consumption tax rate.
    p_super / q_super: probability of entering / remaining in the
        super-star productivity regime.
    rho_e / sigma_e: persistence and innovation scale of log productivity.
    e_bar: super-star productivity multiple of mean normal ability.
    wealth_income_ratio_target: calibration target for mean wealth over
        mean income.
    h_max: maximum working hours (scale applied to the hours action).
    episode_max_steps: hard step cap per episode.
    gini_terminal_threshold: episode ends when income or wealth Gini
        exceeds this value.
    n_households: number of household agents.
    superstar_base: "population" pins super-star ability to e_bar times the
        current mean normal-regime productivity, "unit" to e_bar times 1.0.
    """

    theta: float = 1.0
    gamma_frisch: float = 2.0
    beta: float = 0.975
    alpha: float = 1.0 / 3.0
    delta: float = 0.06
    r_save: float = 0.04
    tau_s: float = 0.065
    p_super: float = 2.2e-6
    q_super: float = 0.990
    rho_e: float = 0.982
    sigma_e: float = 0.200
    e_bar: float = 504.3
    wealth_income_ratio_target: float = 6.6
    h_max: float = 1.0
    episode_max_steps: int = 300
    gini_terminal_threshold: float = 0.8
    n_households: int = 100
    superstar_base: str = "population"

    def __post_init__(self):
        if self.theta <= 0:
            raise ConfigError("theta must be positive")
        if self.gamma_frisch <= 0:
            raise ConfigError("gamma_frisch must be positive")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must lie in (0, 1)")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 <= self.delta <= 1:
            raise ConfigError("delta must lie in [0, 1]")
        if self.r_save < 0:
            raise ConfigError("r_save must be nonnegative")
        if self.tau_s < 0:
            raise ConfigError("tau_s must be nonnegative")
        if not 0 <= self.p_super <= 1 or not 0 <= self.q_super <= 1:
            raise ConfigError("regime probabilities must lie in [0, 1]")
        if not 0 <= self.rho_e < 1:
            raise ConfigError("rho_e must lie in [0, 1)")
        if self.sigma_e < 0:
            raise ConfigError("sigma_e must be nonnegative")
        if self.e_bar <= 0:
            raise ConfigError("e_bar must be positive")
        if self.h_max <= 0:
            raise ConfigError("h_max must be positive")
        if self.episode_max_steps < 1:
            raise ConfigError("episode_max_steps must be at least 1")
        if not 0 < self.gini_terminal_threshold <= 1:
            raise ConfigError("gini_terminal_threshold must lie in (0, 1]")
        if self.n_households < 1:
            raise ConfigError("n_households must be at least 1")
        if self.superstar_base not in ("population", "unit"):
            raise ConfigError("superstar_base must be 'population' or 'unit'")

    @property
    def stationary_log_e_std(self) -> float:
        """Standard deviation of log productivity under the AR(1) alone."""
        return self.sigma_e / math.sqrt(1.0 - self.rho_e**2)


@dataclass(frozen=True)
class TaxSchedule:
    """Progressive tax schedule: rates and curvatures for income and assets.

    tau / tau_a are average-rate levels in [0, 1]; xi / xi_a are
    progressivity curvatures in [0, 1).  xi = 0 degenerates to a flat tax.
    """

    tau: float = 0.0
    xi: float = 0.0
    tau_a: float = 0.0
    xi_a: float = 0.0

    def __post_init__(self):
        if not 0 <= self.tau <= 1 or not 0 <= self.tau_a <= 1:
            raise ConfigError("tau and tau_a must lie in [0, 1]")
        if not 0 <= self.xi < 1 or not 0 <= self.xi_a < 1:
            raise ConfigError("xi and xi_a must lie in [0, 1)")


@dataclass
class HouseholdState:
    """Scalar view of one household, used by the pure ops and tests."""

    asset: float
    productivity: float
    regime: Regime = Regime.NORMAL


@dataclass
class EconomyState:
    """Aggregate bookkeeping carried across steps."""

    capital: float
    debt: float
    deposits: float
    rental_rate: float
    wage: float = 0.0
    gdp: float = 0.0
    consumption: float = 0.0
    government_spending: float = 0.0
    tax_revenue: float = 0.0


def _progressive_tax(base, rate, curvature):
    """base - (1-rate) * base^(1-curvature) / (1-curvature), elementwise."""
    base = np.asarray(base, dtype=np.float64)
    if np.any(base < 0):
        raise DomainError("tax base must be nonnegative")
    keep = (1.0 - rate) * np.power(base, 1.0 - curvature) / (1.0 - curvature)
    return base - keep


def income_tax(income, schedule: TaxSchedule):
    """Income tax owed on pre-tax income under the schedule.

    With xi = 0 this is a flat tax tau * income.  Negative values are
    possible for small incomes when xi > 0 (the schedule redistributes).
    """
    out = _progressive_tax(income, schedule.tau, schedule.xi)
    return float(out) if np.isscalar(income) else out


def asset_tax(asset, schedule: TaxSchedule):
    """Asset tax owed on asset holdings under the schedule."""
    out = _progressive_tax(asset, schedule.tau_a, schedule.xi_a)
    return float(out) if np.isscalar(asset) else out


def household_income(wage, productivity, hours, r_prev, asset):
    """Pre-tax income: labor earnings plus interest on deposits."""
    out = np.multiply(wage, productivity) * hours + np.multiply(r_prev, asset)
    return float(out) if np.isscalar(asset) and np.isscalar(productivity) else out


def budget_transition(income, asset, savings_ratio, schedule: TaxSchedule,
                      tau_s: float):
    """Split post-tax resources into next-period assets and consumption.

    Post-tax resources x = income - T(income) + asset - T_a(asset); the
    household saves savings_ratio * x and consumes the rest at consumer
    prices inclusive of the consumption tax.

    Returns:
        (next_asset, consumption)

    Raises:
        BankruptcyError: if x < 0 (scalar inputs only; the environment
            handles the vector case itself).
    """
    x = (income - income_tax(income, schedule)
         + asset - asset_tax(asset, schedule))
    if np.isscalar(x):
        if x < 0:
            raise BankruptcyError(f"post-tax resources negative: {x}")
    elif np.any(x < 0):
        raise BankruptcyError("post-tax resources negative")
    next_asset = savings_ratio * x
    consumption = (1.0 - savings_ratio) * x / (1.0 + tau_s)
    return next_asset, consumption


def productivity_step(state: HouseholdState, shock_u: float, regime_draw: float,
                      params: ModelParams, mean_normal_e: float = 1.0):
    """Advance one household's productivity by one period.

    In the normal regime log e follows the AR(1), then the household enters
    the super-star regime with probability p_super (keeping its AR(1) draw
    for the entry period).  In the super-star regime ability is pinned to
    e_bar times mean_normal_e; with probability 1 - q_super the household
    reverts, re-seeded from the AR(1) stationary distribution.

    Args:
        shock_u: standard normal innovation.
        regime_draw: uniform [0,1) draw deciding the regime transition.
        mean_normal_e: population mean of normal-regime productivity
            (ignored when params.superstar_base == "unit").

    Returns:
        New HouseholdState with updated productivity and regime.
    """
    if params.superstar_base == "unit":
        mean_normal_e = 1.0
    if state.regime == Regime.NORMAL:
        e = math.exp(params.rho_e * math.log(state.productivity)
                     + params.sigma_e * shock_u)
        regime = Regime.SUPERSTAR if regime_draw < params.p_super else Regime.NORMAL
        return HouseholdState(state.asset, e, regime)
    if regime_draw < params.q_super:
        return HouseholdState(state.asset, params.e_bar * mean_normal_e,
                              Regime.SUPERSTAR)
    e = math.exp(params.stationary_log_e_std * shock_u)
    return HouseholdState(state.asset, e, Regime.NORMAL)


def production(capital: float, labor: float, alpha: float) -> float:
    """Cobb-Douglas output K^alpha * L^(1-alpha); zero if either input is zero."""
    if capital < 0 or labor < 0:
        raise DomainError("capital and labor must be nonnegative")
    if capital == 0.0 or labor == 0.0:
        return 0.0
    return capital**alpha * labor ** (1.0 - alpha)


def factor_prices(capital: float, labor: float, alpha: float):
    """Competitive factor prices (wage, capital rental) from marginal products.

    Raises:
        DegenerateMarketError: if capital or labor is zero (or negative).
    """
    if capital <= 0.0 or labor <= 0.0:
        raise DegenerateMarketError(
            f"cannot price factors with capital={capital}, labor={labor}")
    ratio = capital / labor
    wage = (1.0 - alpha) * ratio**alpha
    rental = alpha * ratio ** (alpha - 1.0)
    return wage, rental


def aggregate_labor(productivity, hours) -> float:
    """Effective labor supply: sum of productivity * hours, fixed order."""
    return float(np.sum(np.multiply(productivity, hours)))


def government_budget_step(debt: float, spending: float, tax_revenue: float,
                           r_prev: float) -> float:
    """Next-period public debt: (1 + r) * debt + spending - tax revenue."""
    return (1.0 + r_prev) * debt + spending - tax_revenue


def total_tax_revenue(income_taxes, asset_taxes, consumption, tau_s: float) -> float:
    """Total revenue: income taxes + asset taxes + consumption tax receipts."""
    return (float(np.sum(income_taxes)) + float(np.sum(asset_taxes))
            + tau_s * float(np.sum(consumption)))


def intermediary_step(deposits_next: float, debt_next: float,
                      params: ModelParams):
    """Close the intermediary balance sheet for next period.

    Deposits fund public debt first; the remainder becomes productive
    capital.  The rental rate for the next period follows from no-arbitrage
    against the deposit rate.

    Returns:
        (capital_next, rental_rate_next)

    Raises:
        CapitalExhaustedError: if deposits cannot cover debt, so no capital
            could be funded.
    """
    capital_next = deposits_next - debt_next
    if capital_next <= 0.0:
        raise CapitalExhaustedError(
            f"deposits {deposits_next} cannot fund capital beyond debt {debt_next}")
    return capital_next, params.r_save + params.delta
