"""Inequality metrics, utilities, rewards, and per-step episode records."""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# Fixed column order of the per-step metrics CSV.  The discounted cumulative
# welfare column is appended after the fixed block.
CSV_COLUMNS = (
    "step", "gdp", "gdp_growth", "wealth_gini", "income_gini",
    "social_welfare", "mean_utility_rich", "mean_utility_mid",
    "mean_utility_poor", "wage_rate", "total_tax", "debt",
    "social_welfare_disc_cum",
)


class RewardTask(enum.Enum):
    """Objective the government optimizes."""

    GDP = "gdp"
    GINI = "gini"
    WELFARE = "welfare"
    MULTI = "multi"


def gini(values) -> float:
    """Gini coefficient of a nonnegative sample; 0.0 for an all-zero sample.

    Computed with the sorted-index formula, which is algebraically equal to
    the mean absolute pairwise difference over 2 * n^2 * mean.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("gini requires a nonempty 1-d sample")
    if np.any(x < 0):
        raise DomainError("gini requires nonnegative values")
    total = float(np.sum(x))
    if total == 0.0:
        return 0.0
    n = x.size
    xs = np.sort(x)
    ranks = np.arange(1, n + 1, dtype=np.float64)
    return float(2.0 * np.sum(ranks * xs) / (n * total) - (n + 1.0) / n)


def lorenz_points(values) -> np.ndarray:
    """Lorenz curve vertices from (0, 0) to (1, 1), shape (n + 1, 2)."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("lorenz_points requires a nonempty 1-d sample")
    if np.any(x < 0):
        raise DomainError("lorenz_points requires nonnegative values")
    total = float(np.sum(x))
    n = x.size
    pop = np.linspace(0.0, 1.0, n + 1)
    if total == 0.0:
        share = pop.copy()  # equality line by convention
    else:
        share = np.concatenate(([0.0], np.cumsum(np.sort(x)) / total))
    return np.column_stack([pop, share])


def household_utility(consumption, hours, theta: float, gamma: float):
    """CRRA consumption utility minus isoelastic labor disutility.

    theta == 1 selects the log-consumption limit.  Raises DomainError for
    nonpositive consumption or negative hours.
    """
    c = np.asarray(consumption, dtype=np.float64)
    h = np.asarray(hours, dtype=np.float64)
    if np.any(c <= 0):
        raise DomainError("consumption must be positive")
    if np.any(h < 0):
        raise DomainError("hours must be nonnegative")
    if theta == 1.0:
        uc = np.log(c)
    else:
        uc = (np.power(c, 1.0 - theta) - 0.0) / (1.0 - theta)
    out = uc - np.power(h, 1.0 + gamma) / (1.0 + gamma)
    return float(out) if np.isscalar(consumption) and np.isscalar(hours) else out


@dataclass(frozen=True)
class GroupStats:
    """Mean asset / income / productivity for the wealth-ranked groups."""

    asset_rich: float
    income_rich: float
    productivity_rich: float
    asset_poor: float
    income_poor: float
    productivity_poor: float


def wealth_order(assets) -> np.ndarray:
    """Indices sorted richest first; ties broken by lower household index."""
    a = np.asarray(assets, dtype=np.float64)
    return np.argsort(-a, kind="stable")


def group_sizes(n: int):
    """(rich, poor) group sizes: ceil(0.1 n) wealthiest, floor(0.5 n) poorest."""
    return math.ceil(0.1 * n), math.floor(0.5 * n)


def group_stats(assets, incomes, productivities) -> GroupStats:
    """Summary statistics of the wealthiest 10% and poorest 50%.

    Ranking is by assets, richest first, ties broken toward the lower
    household index.  Requires at least two households.
    """
    a = np.asarray(assets, dtype=np.float64)
    i = np.asarray(incomes, dtype=np.float64)
    e = np.asarray(productivities, dtype=np.float64)
    n = a.size
    if n < 2 or i.size != n or e.size != n:
        raise DomainError("group_stats needs matching arrays of size >= 2")
    order = wealth_order(a)
    n_rich, n_poor = group_sizes(n)
    rich = order[:n_rich]
    poor = order[n - n_poor:]
    return GroupStats(
        float(np.mean(a[rich])), float(np.mean(i[rich])), float(np.mean(e[rich])),
        float(np.mean(a[poor])), float(np.mean(i[poor])), float(np.mean(e[poor])),
    )


def government_reward(task: RewardTask, gdp: float, prev_gdp, income_gini: float,
                      wealth_gini: float, welfare_sum: float,
                      omega1: float = 1.0, omega2: float = 1.0) -> float:
    """Per-step government reward for the given objective.

    prev_gdp may be None on the first step of an episode, in which case the
    growth term is 0.  A true zero prev_gdp mid-episode is a division by
    zero for the growth-based tasks.
    """
    if task in (RewardTask.GDP, RewardTask.MULTI):
        if prev_gdp is None:
            growth = 0.0
        elif prev_gdp == 0.0:
            raise ZeroDivisionError("previous GDP is zero; growth undefined")
        else:
            growth = (gdp - prev_gdp) / prev_gdp
    if task == RewardTask.GDP:
        return growth
    if task == RewardTask.GINI:
        return -income_gini * wealth_gini
    if task == RewardTask.WELFARE:
        return welfare_sum
    return growth - omega1 * income_gini * wealth_gini + omega2 * welfare_sum


@dataclass
class EpisodeMetrics:
    """One CSV row of per-step episode metrics."""

    step: int
    gdp: float
    gdp_growth: float
    wealth_gini: float
    income_gini: float
    social_welfare: float
    mean_utility_rich: float
    mean_utility_mid: float
    mean_utility_poor: float
    wage_rate: float
    total_tax: float
    debt: float
    social_welfare_disc_cum: float
    years_survived: int = 0

    def row(self):
        return (self.step, self.gdp, self.gdp_growth, self.wealth_gini,
                self.income_gini, self.social_welfare, self.mean_utility_rich,
                self.mean_utility_mid, self.mean_utility_poor, self.wage_rate,
                self.total_tax, self.debt, self.social_welfare_disc_cum)


def metrics_to_csv(rows) -> str:
    """Serialize EpisodeMetrics rows to CSV text with the fixed column order.

    Floats are written with repr (shortest round-trip form) so identical
    runs produce byte-identical files.
    """
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for m in rows:
        vals = m.row()
        buf.write(str(vals[0]) + ","
                  + ",".join(repr(float(v)) for v in vals[1:]) + "\n")
    return buf.getvalue()
