"""The fiscal-policy Markov game: one government, N heterogeneous households.

Observations, rewards and termination follow the conventions documented in
README.md.  All per-household arithmetic is vectorized; identical seeds give
bit-identical trajectories independent of thread count.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .calibration import InitialDistribution, sample_initial_assets
from .core import ModelParams, Regime
from .errors import (
    CapitalExhaustedError,
    DimensionError,
    IllegalStateError,
)
from .metrics import (
    EpisodeMetrics,
    RewardTask,
    gini,
    government_reward,
    group_sizes,
    wealth_order,
)

GOV_OBS_DIM = 7
HH_OBS_DIM = 9
GOV_ACTION_DIM = 5
HH_ACTION_DIM = 2

SAVINGS_EPS = 1e-6

# Floor applied to consumption inside utility so a terminal row stays finite.
_UTILITY_CONSUMPTION_FLOOR = 1e-300


class DoneReason(enum.IntEnum):
    """Why an episode ended.  Integer codes are part of the wire format;
    0 is reserved for "not done"."""

    MAX_STEPS = 1
    GINI_EXCEEDED = 2
    CONSUMPTION_EXCEEDS_OUTPUT = 3
    BANKRUPTCY = 4
    NUMERIC_OVERFLOW = 5


@dataclass(frozen=True)
class GovernmentAction:
    """Fiscal instrument settings chosen by the government each step."""

    tau: float = 0.0
    xi: float = 0.0
    tau_a: float = 0.0
    xi_a: float = 0.0
    spending_ratio: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.tau, self.xi, self.tau_a, self.xi_a,
                         self.spending_ratio], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "GovernmentAction":
        a = np.asarray(arr, dtype=np.float64)
        if a.shape != (GOV_ACTION_DIM,):
            raise DimensionError(
                f"government action must have shape ({GOV_ACTION_DIM},), "
                f"got {a.shape}")
        return cls(*map(float, a))


@dataclass(frozen=True)
class HouseholdAction:
    """Proportional savings and hours choice of one household."""

    savings_ratio: float
    hours_fraction: float

    def as_array(self) -> np.ndarray:
        return np.array([self.savings_ratio, self.hours_fraction],
                        dtype=np.float64)


def _bound_pair(lo, hi):
    return (float(lo), float(hi))


@dataclass(frozen=True)
class ActionBounds:
    """Clamping bounds for the government action components.

    Defaults keep every instrument inside its mathematically valid range;
    tests may widen them (e.g. an asset-tax rate above 1 forces negative
    post-tax resources).
    """

    tau: tuple = _bound_pair(0.0, 1.0)
    xi: tuple = _bound_pair(0.0, 0.999)
    tau_a: tuple = _bound_pair(0.0, 1.0)
    xi_a: tuple = _bound_pair(0.0, 0.999)
    spending_ratio: tuple = _bound_pair(0.0, 0.999)

    def lo(self) -> np.ndarray:
        return np.array([self.tau[0], self.xi[0], self.tau_a[0],
                         self.xi_a[0], self.spending_ratio[0]])

    def hi(self) -> np.ndarray:
        return np.array([self.tau[1], self.xi[1], self.tau_a[1],
                         self.xi_a[1], self.spending_ratio[1]])


@dataclass
class StepResult:
    """Everything one environment step returns."""

    gov_obs: np.ndarray
    hh_obs: np.ndarray
    gov_reward: float
    hh_rewards: np.ndarray
    done: bool
    done_reason: DoneReason | None
    metrics: EpisodeMetrics
    info: dict = field(default_factory=dict)


class EconomyEnv:
    """Reset/step environment for the government-vs-households game.

    Args:
        params: structural parameters.
        distribution: initial wealth distribution (sampled at reset).
        seed: master seed; all episode randomness derives from it.
        task: government objective (reward definition).
        bounds: clamping bounds for government actions.
        omega1 / omega2: weights of the multi-objective reward.
    """

    def __init__(self, params: ModelParams, distribution: InitialDistribution,
                 seed: int = 0, task: RewardTask = RewardTask.GDP,
                 bounds: ActionBounds | None = None,
                 omega1: float = 1.0, omega2: float = 1.0):
        self.params = params
        self.distribution = distribution
        self.task = task
        self.bounds = bounds or ActionBounds()
        self.omega1 = omega1
        self.omega2 = omega2
        self._seed_seq = np.random.SeedSequence(seed)
        self._episode_counter = 0
        self._needs_reset = True
        self.done = False
        # Household action clamp ranges, exposed for policy squashing.
        self.hh_action_lo = np.array([SAVINGS_EPS, 0.0])
        self.hh_action_hi = np.array([1.0 - SAVINGS_EPS, 1.0])

    @property
    def n_households(self) -> int:
        return self.params.n_households

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int | None = None, initial_assets=None,
              initial_productivity=None):
        """Start a new episode; returns (gov_obs, hh_obs).

        With an explicit seed the initial state is a bit-identical function
        of that seed; otherwise an episode seed is derived from the master
        seed and an episode counter.  initial_assets / initial_productivity
        override calibration sampling (testing and calibration hook).
        """
        if seed is not None:
            ss = np.random.SeedSequence(seed)
        else:
            ss = np.random.SeedSequence(
                entropy=self._seed_seq.entropy,
                spawn_key=(self._episode_counter,))
            self._episode_counter += 1
        init_ss, shock_ss = ss.spawn(2)
        init_rng = np.random.default_rng(init_ss)
        self._rng = np.random.default_rng(shock_ss)

        n = self.params.n_households
        if initial_assets is not None:
            assets = np.array(initial_assets, dtype=np.float64)
            if assets.shape != (n,):
                raise DimensionError(f"initial_assets must have shape ({n},)")
        else:
            assets = sample_initial_assets(self.distribution, n, init_rng)
        if initial_productivity is not None:
            e = np.array(initial_productivity, dtype=np.float64)
            if e.shape != (n,):
                raise DimensionError(
                    f"initial_productivity must have shape ({n},)")
        else:
            e = np.exp(init_rng.normal(
                0.0, self.params.stationary_log_e_std, size=n))

        self.assets = assets
        self.productivity = e
        self.regime = np.full(n, int(Regime.NORMAL), dtype=np.int8)
        self.debt = 0.0
        self.deposits = float(np.sum(assets))
        self.capital = self.deposits - self.debt
        self.rental_rate = self.params.r_save + self.params.delta
        self.wage = 0.0
        self.last_incomes = np.zeros(n)
        self.prev_gdp = None
        self.step_count = 0
        self.clamp_count = 0
        self.welfare_disc_cum = 0.0
        self.done = False
        self.done_reason = None
        self._needs_reset = False
        self.metrics_rows: list[EpisodeMetrics] = []
        return self._observations()

    def step(self, gov_action, hh_actions) -> StepResult:
        """Advance the economy one period.

        Args:
            gov_action: GovernmentAction or array of 5 floats.
            hh_actions: array (n_households, 2) of [savings_ratio,
                hours_fraction] rows.

        Raises:
            IllegalStateError: if called before reset or after done.
            DimensionError: on action shape mismatch.
            CapitalExhaustedError: if next-period capital would be <= 0 on a
                step that is not otherwise terminal.
        """
        if self._needs_reset:
            raise IllegalStateError("step called before reset")
        if self.done:
            raise IllegalStateError("step called after episode end")

        p = self.params
        n = p.n_households

        # 1. clamp actions into bounds.
        if isinstance(gov_action, GovernmentAction):
            gov_raw = gov_action.as_array()
        else:
            gov_raw = np.asarray(gov_action, dtype=np.float64)
            if gov_raw.shape != (GOV_ACTION_DIM,):
                raise DimensionError(
                    f"government action must have shape ({GOV_ACTION_DIM},), "
                    f"got {gov_raw.shape}")
        hh_raw = np.asarray(hh_actions, dtype=np.float64)
        if hh_raw.shape != (n, HH_ACTION_DIM):
            raise DimensionError(
                f"household actions must have shape ({n}, {HH_ACTION_DIM}), "
                f"got {hh_raw.shape}")

        gov = np.clip(gov_raw, self.bounds.lo(), self.bounds.hi())
        hh = np.clip(hh_raw, self.hh_action_lo, self.hh_action_hi)
        with np.errstate(invalid="ignore"):
            self.clamp_count += int(np.sum(gov != gov_raw))
            self.clamp_count += int(np.sum(hh != hh_raw))
        tau, xi, tau_a, xi_a, spending_ratio = gov
        savings = hh[:, 0]
        hours = hh[:, 1] * p.h_max

        # 2-3. factor markets clear against current capital.
        labor = float(np.sum(self.productivity * hours))
        capital = self.capital
        if capital > 0.0 and labor > 0.0:
            wage = (1.0 - p.alpha) * (capital / labor) ** p.alpha
            gdp = capital**p.alpha * labor ** (1.0 - p.alpha)
        else:
            wage, gdp = 0.0, 0.0  # degenerate market: no production

        # 4. household incomes at the previous deposit rate.
        incomes = wage * self.productivity * hours + p.r_save * self.assets

        # 5. taxes and the savings/consumption split.
        with np.errstate(invalid="ignore"):
            inc_taxes = incomes - (1.0 - tau) * np.power(
                incomes, 1.0 - xi) / (1.0 - xi)
            ast_taxes = self.assets - (1.0 - tau_a) * np.power(
                self.assets, 1.0 - xi_a) / (1.0 - xi_a)
        x = incomes - inc_taxes + self.assets - ast_taxes
        next_assets = savings * x
        consumption = (1.0 - savings) * x / (1.0 + p.tau_s)

        # 6. aggregates.
        total_consumption = float(np.sum(consumption))
        spending = spending_ratio * gdp
        total_tax = (float(np.sum(inc_taxes)) + float(np.sum(ast_taxes))
                     + p.tau_s * total_consumption)

        finite = bool(
            np.isfinite(gdp) and np.isfinite(wage) and np.isfinite(total_tax)
            and np.isfinite(total_consumption)
            and np.all(np.isfinite(next_assets)))
        if finite:
            income_gini = gini(incomes)
            wealth_gini = gini(np.maximum(next_assets, 0.0))
            utilities = self._utilities(consumption, hours)
            welfare = float(np.sum(utilities))
        else:
            income_gini = wealth_gini = welfare = float("nan")
            utilities = np.full(n, np.nan)

        # 7. terminal checks, in priority order.
        reason = None
        if not finite or not np.isfinite(welfare):
            reason = DoneReason.NUMERIC_OVERFLOW
        elif np.any(next_assets < 0.0):
            reason = DoneReason.BANKRUPTCY
        elif total_consumption + spending > gdp:
            reason = DoneReason.CONSUMPTION_EXCEEDS_OUTPUT
        elif (income_gini > p.gini_terminal_threshold
              or wealth_gini > p.gini_terminal_threshold):
            reason = DoneReason.GINI_EXCEEDED
        elif self.step_count + 1 >= p.episode_max_steps:
            reason = DoneReason.MAX_STEPS

        # 8. public debt, deposits, and the intermediary's balance sheet.
        next_debt = (1.0 + p.r_save) * self.debt + spending - total_tax
        next_deposits = float(np.sum(next_assets))
        next_capital = next_deposits - next_debt
        if next_capital <= 0.0 and reason is None:
            raise CapitalExhaustedError(
                f"deposits {next_deposits} cannot fund capital beyond "
                f"debt {next_debt}")
        investment = next_capital - (1.0 - p.delta) * capital

        # rewards (growth uses last period's output; 0 on the first step).
        if self.prev_gdp is None or self.prev_gdp == 0.0:
            growth = 0.0
        else:
            growth = (gdp - self.prev_gdp) / self.prev_gdp
        gov_rew = government_reward(
            self.task, gdp, self.prev_gdp, income_gini, wealth_gini, welfare,
            self.omega1, self.omega2)
        if reason is None and not np.isfinite(gov_rew):
            reason = DoneReason.NUMERIC_OVERFLOW

        # productivity transition: the returned observations carry next state.
        self._advance_productivity()

        # commit state.
        step_index = self.step_count
        self.step_count += 1
        self.assets = next_assets
        self.debt = next_debt
        self.deposits = next_deposits
        self.capital = max(next_capital, 0.0)
        self.wage = wage
        self.last_incomes = incomes
        self.prev_gdp = gdp
        self.welfare_disc_cum += p.beta**step_index * welfare
        self.done = reason is not None
        self.done_reason = reason

        rich_u, mid_u, poor_u = self._group_utilities(next_assets, utilities)
        metrics = EpisodeMetrics(
            step=step_index, gdp=gdp, gdp_growth=growth,
            wealth_gini=wealth_gini, income_gini=income_gini,
            social_welfare=welfare, mean_utility_rich=rich_u,
            mean_utility_mid=mid_u, mean_utility_poor=poor_u,
            wage_rate=wage, total_tax=total_tax, debt=next_debt,
            social_welfare_disc_cum=self.welfare_disc_cum,
            years_survived=self.step_count)
        self.metrics_rows.append(metrics)

        gov_obs, hh_obs = self._observations()
        info = {
            "clamped_components": self.clamp_count,
            "consumption": total_consumption,
            "spending": spending,
            "investment": investment,
            "capital": self.capital,
            "deposits": self.deposits,
            "resource_gap": gdp - (total_consumption + investment + spending),
        }
        return StepResult(gov_obs, hh_obs, float(gov_rew), utilities,
                          self.done, reason, metrics, info)

    # -- internals ---------------------------------------------------------

    def _utilities(self, consumption, hours):
        p = self.params
        c = np.maximum(consumption, _UTILITY_CONSUMPTION_FLOOR)
        if p.theta == 1.0:
            uc = np.log(c)
        else:
            uc = np.power(c, 1.0 - p.theta) / (1.0 - p.theta)
        return uc - np.power(hours, 1.0 + p.gamma_frisch) / (1.0 + p.gamma_frisch)

    def _group_utilities(self, assets, utilities):
        n = assets.size
        order = wealth_order(np.nan_to_num(assets, nan=0.0))
        n_rich, n_poor = group_sizes(n)
        rich = utilities[order[:n_rich]]
        poor = utilities[order[n - n_poor:]]
        mid = utilities[order[n_rich:n - n_poor]]
        mean = lambda g: float(np.mean(g)) if g.size else float("nan")
        return mean(rich), mean(mid), mean(poor)

    def _advance_productivity(self):
        p = self.params
        n = p.n_households
        u = self._rng.standard_normal(n)
        draw = self._rng.random(n)
        normal = self.regime == int(Regime.NORMAL)
        super_ = ~normal
        e = self.productivity
        new_e = np.empty_like(e)
        new_e[normal] = np.exp(p.rho_e * np.log(e[normal])
                               + p.sigma_e * u[normal])
        entering = normal & (draw < p.p_super)
        staying = super_ & (draw < p.q_super)
        reverting = super_ & ~staying
        new_e[reverting] = np.exp(p.stationary_log_e_std * u[reverting])
        new_regime = np.where(entering | staying, int(Regime.SUPERSTAR),
                              int(Regime.NORMAL)).astype(np.int8)
        is_normal_now = new_regime == int(Regime.NORMAL)
        if p.superstar_base == "population":
            base = (float(np.mean(new_e[is_normal_now]))
                    if np.any(is_normal_now) else 1.0)
        else:
            base = 1.0
        new_e[staying] = p.e_bar * base
        self.productivity = new_e
        self.regime = new_regime

    def _observations(self):
        n = self.params.n_households
        order = wealth_order(self.assets)
        n_rich, n_poor = group_sizes(n)
        rich = order[:n_rich]
        poor = order[n - n_poor:]
        mean = lambda g: float(np.mean(g)) if g.size else 0.0
        gov_obs = np.array([
            self.wage,
            mean(self.assets[rich]),
            mean(self.last_incomes[rich]),
            mean(self.productivity[rich]),
            mean(self.assets[poor]),
            mean(self.last_incomes[poor]),
            mean(self.productivity[poor]),
        ])
        hh_obs = np.empty((n, HH_OBS_DIM))
        hh_obs[:, :GOV_OBS_DIM] = gov_obs
        hh_obs[:, 7] = self.assets
        hh_obs[:, 8] = self.productivity
        return gov_obs, hh_obs
