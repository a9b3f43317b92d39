"""Line-delimited JSON protocol for driving environments over stdio.

Each request is one JSON object per line: {"id": ..., "op": ..., ...};
each response echoes the id with either {"ok": true, "result": ...} or
{"ok": false, "error": {"type": ..., "message": ...}}.  Numeric arrays
travel as base64-encoded little-endian float64 bytes so external clients
see bit-identical values.

Operations:
    create       {"config": {...}, "seed": int} -> {"handle": str, "n": int}
    reset        {"handle": str, "seed": int?} -> observations
    step         {"handle": str, "gov_action": b64(5), "hh_actions": b64(N*2)}
    get_metrics  {"handle": str} -> {"csv": str, "steps": int}
    close        {"handle": str} -> {"closed": true}
    stats        {} -> {"open_handles": int, "rss_bytes": int}
    shutdown     {} -> {"bye": true}, then the server exits

done_reason codes: 0 none, 1 MaxSteps, 2 GiniExceeded,
3 ConsumptionExceedsOutput, 4 Bankruptcy, 5 NumericOverflow.
"""

from __future__ import annotations

import base64
import dataclasses
import json
import sys

import numpy as np

from .calibration import default_wealth_table
from .config import RunConfig, _distribution_from_section
from .core import ModelParams
from .env import EconomyEnv, GOV_ACTION_DIM, HH_ACTION_DIM
from .errors import (
    ConfigError,
    DimensionError,
    IllegalStateError,
    TaxeconError,
)
from .metrics import RewardTask, metrics_to_csv


def encode_array(a) -> str:
    return base64.b64encode(
        np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def decode_array(data, expect_size: int, what: str) -> np.ndarray:
    """Accept base64 float64 bytes or a plain JSON list of numbers."""
    if isinstance(data, str):
        try:
            raw = base64.b64decode(data, validate=True)
        except Exception:
            raise DimensionError(f"{what}: invalid base64 payload") from None
        if len(raw) != 8 * expect_size:
            raise DimensionError(
                f"{what}: expected {expect_size} float64 values, got "
                f"{len(raw)} bytes")
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if isinstance(data, list):
        arr = np.asarray(data, dtype=np.float64).ravel()
        if arr.size != expect_size:
            raise DimensionError(
                f"{what}: expected {expect_size} values, got {arr.size}")
        return arr
    raise DimensionError(f"{what}: expected base64 string or list")


_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelParams)}
_TOP_KEYS = {"model", "calibration", "task", "omega1", "omega2"}


def _env_from_config(config: dict | None, seed: int) -> EconomyEnv:
    config = config or {}
    if not isinstance(config, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(config) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
    model_cfg = config.get("model", {})
    if not isinstance(model_cfg, dict):
        raise ConfigError("config.model must be a mapping")
    bad = set(model_cfg) - _MODEL_KEYS
    if bad:
        raise ConfigError(f"unknown model key {sorted(bad)[0]!r}")
    params = ModelParams(**model_cfg)
    cal = config.get("calibration")
    if cal is None:
        dist = default_wealth_table()
    elif isinstance(cal, dict):
        dist = _distribution_from_section({k: str(v) for k, v in cal.items()})
    else:
        raise ConfigError("config.calibration must be a mapping")
    task_name = config.get("task", "gdp")
    try:
        task = RewardTask(task_name)
    except ValueError:
        raise ConfigError(f"unknown task {task_name!r}") from None
    return EconomyEnv(params, dist, seed=seed, task=task,
                      omega1=float(config.get("omega1", 1.0)),
                      omega2=float(config.get("omega2", 1.0)))


def _rss_bytes() -> int:
    try:
        with open("/proc/self/status") as fh:
            for line in fh:
                if line.startswith("VmRSS:"):
                    return int(line.split()[1]) * 1024
    except (OSError, ValueError, IndexError):
        pass
    return -1


class BridgeServer:
    """Handle registry plus request dispatch (transport-agnostic)."""

    def __init__(self):
        self._envs: dict[str, EconomyEnv] = {}
        self._counter = 0
        self.running = True

    @property
    def open_handles(self) -> int:
        return len(self._envs)

    def _env(self, req) -> EconomyEnv:
        handle = req.get("handle")
        env = self._envs.get(handle)
        if env is None:
            raise IllegalStateError(f"unknown handle {handle!r}")
        return env

    def _observation_result(self, gov_obs, hh_obs, env) -> dict:
        return {
            "gov_obs": encode_array(gov_obs),
            "hh_obs": encode_array(hh_obs),
            "n": env.n_households,
        }

    def op_create(self, req):
        seed = int(req.get("seed", 0))
        env = _env_from_config(req.get("config"), seed)
        self._counter += 1
        handle = f"env{self._counter}"
        self._envs[handle] = env
        return {"handle": handle, "n": env.n_households}

    def op_reset(self, req):
        env = self._env(req)
        seed = req.get("seed")
        gov_obs, hh_obs = env.reset(
            seed=None if seed is None else int(seed))
        return self._observation_result(gov_obs, hh_obs, env)

    def op_step(self, req):
        env = self._env(req)
        n = env.n_households
        gov = decode_array(req.get("gov_action"), GOV_ACTION_DIM,
                           "gov_action")
        hh = decode_array(req.get("hh_actions"), n * HH_ACTION_DIM,
                          "hh_actions").reshape(n, HH_ACTION_DIM)
        result = env.step(gov, hh)
        m = result.metrics
        return {
            "gov_obs": encode_array(result.gov_obs),
            "hh_obs": encode_array(result.hh_obs),
            "gov_reward": result.gov_reward,
            "hh_rewards": encode_array(result.hh_rewards),
            "done": result.done,
            "done_reason": 0 if result.done_reason is None
                           else int(result.done_reason),
            "info": {
                "step": m.step,
                "gdp": m.gdp,
                "gdp_growth": m.gdp_growth,
                "wealth_gini": m.wealth_gini,
                "income_gini": m.income_gini,
                "social_welfare": m.social_welfare,
                "wage_rate": m.wage_rate,
                "total_tax": m.total_tax,
                "debt": m.debt,
            },
        }

    def op_get_metrics(self, req):
        env = self._env(req)
        return {"csv": metrics_to_csv(env.metrics_rows),
                "steps": len(env.metrics_rows)}

    def op_close(self, req):
        handle = req.get("handle")
        if handle not in self._envs:
            raise IllegalStateError(f"unknown handle {handle!r}")
        del self._envs[handle]
        return {"closed": True}

    def op_stats(self, req):
        return {"open_handles": self.open_handles, "rss_bytes": _rss_bytes()}

    def op_shutdown(self, req):
        self.running = False
        return {"bye": True}

    _OPS = {
        "create": op_create,
        "reset": op_reset,
        "step": op_step,
        "get_metrics": op_get_metrics,
        "close": op_close,
        "stats": op_stats,
        "shutdown": op_shutdown,
    }

    def handle_request(self, req: dict) -> dict:
        rid = req.get("id") if isinstance(req, dict) else None
        if not isinstance(req, dict) or self._OPS.get(req.get("op")) is None:
            op = req.get("op") if isinstance(req, dict) else None
            return {"id": rid, "ok": False,
                    "error": {"type": "BadRequest",
                              "message": f"unknown op {op!r}"}}
        try:
            fn = self._OPS[req["op"]]
            return {"id": rid, "ok": True, "result": fn(self, req)}
        except TaxeconError as exc:
            return {"id": rid, "ok": False,
                    "error": {"type": _error_type(exc), "message": str(exc)}}
        except Exception as exc:  # marshalling or internal failure
            return {"id": rid, "ok": False,
                    "error": {"type": "RuntimeError",
                              "message": f"{type(exc).__name__}: {exc}"}}

    def handle_line(self, line: str) -> str:
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            return json.dumps({"id": None, "ok": False,
                               "error": {"type": "BadRequest",
                                         "message": f"invalid JSON: {exc}"}})
        return json.dumps(self.handle_request(req))


def _error_type(exc: TaxeconError) -> str:
    if isinstance(exc, DimensionError):
        return "ShapeError"
    if isinstance(exc, IllegalStateError):
        return "IllegalState"
    if isinstance(exc, ConfigError):
        return "ConfigError"
    return type(exc).__name__.removesuffix("Error") or "RuntimeError"


def serve_stdio(config: RunConfig | None = None, stdin=None, stdout=None):
    """Serve requests from stdin until EOF or a shutdown op."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    server = BridgeServer()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        stdout.write(server.handle_line(line) + "\n")
        stdout.flush()
        if not server.running:
            break
