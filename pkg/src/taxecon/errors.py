"""Exception types shared across the package."""


class TaxeconError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(TaxeconError):
    """Invalid configuration value or file."""


class DomainError(TaxeconError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class BankruptcyError(TaxeconError):
    """Post-tax resources went negative for a household."""


class DegenerateMarketError(TaxeconError):
    """Factor market cannot clear: zero capital or zero labor."""


class CapitalExhaustedError(TaxeconError):
    """Financial intermediary cannot fund any capital next period."""


class IllegalStateError(TaxeconError):
    """Operation called on an object in the wrong lifecycle state."""


class DimensionError(TaxeconError, ValueError):
    """Action or array has the wrong shape for this environment."""


class NonFiniteGradientError(TaxeconError):
    """A gradient turned NaN or infinite during an update step."""


class NoBracketError(TaxeconError):
    """Root search could not bracket a solution in the given interval."""


class CheckpointError(TaxeconError):
    """Malformed or incompatible checkpoint data."""
