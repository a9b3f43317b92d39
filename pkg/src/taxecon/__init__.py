"""taxecon: a reproducible fiscal-policy simulator.

One government sets progressive income/asset taxes and a spending share;
N heterogeneous households choose savings and hours.  The package bundles
inequality metrics, wealth calibration, baseline policies (free market,
random, analytic rule, genetic search) and a bi-level mean-field
actor-critic trainer on a self-contained neural substrate.
"""

from .core import (
    EconomyState,
    HouseholdState,
    ModelParams,
    Regime,
    TaxSchedule,
    aggregate_labor,
    asset_tax,
    budget_transition,
    factor_prices,
    government_budget_step,
    household_income,
    income_tax,
    intermediary_step,
    production,
    productivity_step,
    total_tax_revenue,
)
from .calibration import (
    DistributionKind,
    InitialDistribution,
    calibrate_hmax,
    default_wealth_table,
    sample_initial_assets,
)
from .env import (
    ActionBounds,
    DoneReason,
    EconomyEnv,
    GovernmentAction,
    HouseholdAction,
    StepResult,
)
from .metrics import (
    EpisodeMetrics,
    GroupStats,
    RewardTask,
    gini,
    government_reward,
    group_stats,
    household_utility,
    lorenz_points,
    metrics_to_csv,
)

__version__ = "0.1.0"
