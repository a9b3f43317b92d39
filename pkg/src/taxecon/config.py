"""INI configuration loading and run manifests.

A run is configured by an INI file with sections [model], [calibration],
[policy], [ga], [trainer], and [run].  Every section is optional; known
keys override dataclass defaults and anything unknown is an error so that
typos fail loudly.  A manifest records the fully resolved configuration of
a run next to its outputs.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import platform
from dataclasses import dataclass, field

from . import __version__
from .bmfac import TrainerConfig
from .calibration import (
    DistributionKind,
    InitialDistribution,
    default_wealth_table,
)
from .core import ModelParams
from .errors import ConfigError
from .ga import GAConfig
from .metrics import RewardTask


@dataclass(frozen=True)
class PolicySettings:
    """Which baseline policies drive a simulation run."""

    gov_policy: str = "free"
    hh_policy: str = "heathcote"
    sigma_theta: float = 0.2
    sigma_omega: float = 0.1
    normalizer: float = 0.05
    ga_rollouts: int = 3
    ga_episode_cap: int = 0  # 0 means the episode limit of the model


@dataclass(frozen=True)
class RunSettings:
    """Top-level run parameters."""

    seed: int = 0
    episodes: int = 1
    task: str = "gdp"
    threads: int = 1
    omega1: float = 1.0
    omega2: float = 1.0
    out: str = ""


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, resolved from defaults and an INI file."""

    model: ModelParams = field(default_factory=ModelParams)
    distribution: InitialDistribution = field(
        default_factory=default_wealth_table)
    policy: PolicySettings = field(default_factory=PolicySettings)
    ga: GAConfig = field(default_factory=GAConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    run: RunSettings = field(default_factory=RunSettings)

    @property
    def task_enum(self) -> RewardTask:
        try:
            return RewardTask(self.run.task)
        except ValueError:
            raise ConfigError(
                f"unknown task {self.run.task!r}; expected one of "
                f"{[t.value for t in RewardTask]}") from None


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _convert(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"[{section}] {key} = {raw!r} is not a valid "
            f"{kind.__name__}") from None


_TYPE_NAMES = {"float": float, "int": int, "str": str, "bool": bool}


def _dataclass_from_section(cls, section: str, items: dict):
    """Build cls from its defaults overridden by the section's items."""
    kinds = {}
    for f in dataclasses.fields(cls):
        kind = f.type if isinstance(f.type, type) else _TYPE_NAMES.get(str(f.type))
        kinds[f.name] = kind or str
    kwargs = {}
    for key, raw in items.items():
        if key not in kinds:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        kwargs[key] = _convert(section, key, raw, kinds[key])
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] settings: {exc}") from None


_DISTRIBUTION_KEYS = {
    "kind", "value", "mu", "sigma", "scale", "shape", "table", "csv"}


def _distribution_from_section(items: dict) -> InitialDistribution:
    unknown = set(items) - _DISTRIBUTION_KEYS
    if unknown:
        raise ConfigError(
            f"unknown key {sorted(unknown)[0]!r} in section [calibration]")
    kind = items.get("kind", "quantile_table")
    try:
        kind = DistributionKind(kind)
    except ValueError:
        raise ConfigError(
            f"[calibration] kind = {kind!r} is not a distribution kind; "
            f"expected one of {[k.value for k in DistributionKind]}") from None
    f = lambda key, default: _convert("calibration", key, items[key], float) \
        if key in items else default
    if kind is DistributionKind.POINT_MASS:
        return InitialDistribution.point_mass(f("value", 1.0))
    if kind is DistributionKind.LOGNORMAL:
        return InitialDistribution.lognormal(f("mu", 0.0), f("sigma", 1.0))
    if kind is DistributionKind.PARETO:
        return InitialDistribution.pareto(f("scale", 1.0), f("shape", 1.5))
    if "csv" in items:
        return InitialDistribution.from_csv(items["csv"])
    if "table" in items:
        raise ConfigError(
            "[calibration] table must be given as csv = <path>")
    return default_wealth_table()


def load_config(path: str | None = None) -> RunConfig:
    """Read an INI file into a RunConfig; None loads pure defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
    known = {"model", "calibration", "policy", "ga", "bmfac", "run"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config section [{sorted(unknown)[0]}]")

    def items(name):
        return dict(parser.items(name)) if parser.has_section(name) else {}

    return RunConfig(
        model=_dataclass_from_section(ModelParams, "model", items("model")),
        distribution=_distribution_from_section(items("calibration")),
        policy=_dataclass_from_section(
            PolicySettings, "policy", items("policy")),
        ga=_dataclass_from_section(GAConfig, "ga", items("ga")),
        trainer=_dataclass_from_section(
            TrainerConfig, "bmfac", items("bmfac")),
        run=_dataclass_from_section(RunSettings, "run", items("run")),
    )


_SECTION_NAMES = {"distribution": "calibration", "trainer": "bmfac"}


def config_dict(config: RunConfig) -> dict:
    """JSON-serializable snapshot of a resolved RunConfig, keyed by the
    INI section names."""
    out = {}
    for f in dataclasses.fields(config):
        key = _SECTION_NAMES.get(f.name, f.name)
        out[key] = dataclasses.asdict(getattr(config, f.name))
    return out


def write_manifest(path, config: RunConfig, command: str, seed: int,
                   extra: dict | None = None):
    """Write the resolved run manifest as JSON."""
    data = {
        "package": "taxecon",
        "version": __version__,
        "command": command,
        "seed": seed,
        "python": platform.python_version(),
        "config": config_dict(config),
    }
    if extra:
        data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True,
                  default=lambda o: getattr(o, "value", str(o)))
        fh.write("\n")
