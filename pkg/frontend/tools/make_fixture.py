"""Regenerate test/fixtures/parity.json from the core simulator.

The fixture drives the protocol client through a 100-step scripted
trajectory; expected values come from the in-process environment, so the
test proves the bindings add nothing and lose nothing. Run from the
repository root:

    python3 frontend/tools/make_fixture.py
"""

import json
import pathlib

import numpy as np

from taxecon.bridge import encode_array
from taxecon.calibration import InitialDistribution
from taxecon.core import ModelParams
from taxecon.env import EconomyEnv
from taxecon.metrics import RewardTask, metrics_to_csv

N = 4
STEPS = 100
EPISODE_SEED = 2024

CONFIG = {
    "model": {
        "n_households": N,
        "episode_max_steps": 200,
        "gini_terminal_threshold": 1.0,
        "h_max": 2.0,
    },
    "calibration": {"kind": "lognormal", "mu": "0.0", "sigma": "0.5"},
    "task": "gdp",
}


def main():
    params = ModelParams(**CONFIG["model"])
    dist = InitialDistribution.lognormal(0.0, 0.5)
    env = EconomyEnv(params, dist, seed=0, task=RewardTask.GDP)
    gov_obs, hh_obs = env.reset(seed=EPISODE_SEED)

    rng = np.random.default_rng(EPISODE_SEED)
    steps = []
    for _ in range(STEPS):
        gov = rng.uniform([0.0, 0.0, 0.0, 0.0, 0.05],
                          [0.3, 0.3, 0.1, 0.3, 0.15])
        hh = np.stack([rng.uniform(0.85, 0.98, size=N),
                       rng.uniform(0.3, 0.9, size=N)], axis=1)
        res = env.step(gov, hh)
        assert not res.done, "scripted trajectory must not terminate"
        steps.append({
            "gov_action": encode_array(gov),
            "hh_actions": encode_array(hh),
            "expect": {
                "gov_obs": encode_array(res.gov_obs),
                "hh_obs": encode_array(res.hh_obs),
                "gov_reward": float(res.gov_reward),
                "hh_rewards": encode_array(res.hh_rewards),
                "done": bool(res.done),
                # wire convention: 0 while the episode is still running
                "done_reason": 0 if res.done_reason is None
                               else int(res.done_reason),
            },
        })

    fixture = {
        "config": CONFIG,
        "episode_seed": EPISODE_SEED,
        "n_households": N,
        "reset": {"gov_obs": encode_array(gov_obs),
                  "hh_obs": encode_array(hh_obs)},
        "steps": steps,
        "metrics_csv": metrics_to_csv(env.metrics_rows),
    }
    out = pathlib.Path(__file__).parent.parent / "test" / "fixtures" / "parity.json"
    out.write_text(json.dumps(fixture, indent=1) + "\n")
    print(f"wrote {out} ({out.stat().st_size} bytes, {len(steps)} steps)")


if __name__ == "__main__":
    main()
