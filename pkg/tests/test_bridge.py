"""Tests for the line-delimited JSON environment bridge."""

import io
import json
import subprocess
import sys

import numpy as np
import pytest

from taxecon.bridge import BridgeServer, decode_array, encode_array, serve_stdio
from taxecon.calibration import InitialDistribution
from taxecon.core import ModelParams
from taxecon.env import EconomyEnv
from taxecon.errors import DimensionError
from taxecon.metrics import CSV_COLUMNS, RewardTask


CONFIG = {
    "model": {"n_households": 4, "episode_max_steps": 15,
              "gini_terminal_threshold": 1.0, "h_max": 2.0},
    "calibration": {"kind": "lognormal", "mu": 1.0, "sigma": 0.8},
    "task": "gdp",
}


def direct_env(seed=7):
    params = ModelParams(**CONFIG["model"])
    dist = InitialDistribution.lognormal(1.0, 0.8)
    return EconomyEnv(params, dist, seed=seed, task=RewardTask.GDP)


def request(server, op, **fields):
    reply = json.loads(server.handle_line(json.dumps({"id": 1, "op": op,
                                                      **fields})))
    assert reply["id"] == 1
    return reply


def ok(server, op, **fields):
    reply = request(server, op, **fields)
    assert reply["ok"], reply
    return reply["result"]


def err(server, op, **fields):
    reply = request(server, op, **fields)
    assert not reply["ok"], reply
    return reply["error"]


def b64_to_array(data):
    return np.frombuffer(__import__("base64").b64decode(data), dtype="<f8")


def sample_actions(rng, n):
    gov = rng.uniform([0.0, 0.0, 0.0, 0.0, 0.05],
                      [0.5, 0.5, 0.5, 0.5, 0.3])
    hh = rng.uniform(0.05, 0.95, size=(n, 2))
    return gov, hh


class TestArrayCodec:
    def test_round_trip(self):
        a = np.array([1.5, -2.25, 1e300, 0.1])
        assert np.array_equal(decode_array(encode_array(a), 4, "x"), a)

    def test_plain_list_accepted(self):
        assert np.array_equal(decode_array([1, 2, 3], 3, "x"),
                              np.array([1.0, 2.0, 3.0]))

    def test_wrong_size(self):
        with pytest.raises(DimensionError):
            decode_array(encode_array(np.zeros(3)), 4, "x")
        with pytest.raises(DimensionError):
            decode_array([1.0, 2.0], 3, "x")

    def test_bad_base64(self):
        with pytest.raises(DimensionError):
            decode_array("not base64!!", 4, "x")

    def test_bad_type(self):
        with pytest.raises(DimensionError):
            decode_array({"a": 1}, 1, "x")


class TestLifecycle:
    def test_create_reset_step_close(self):
        server = BridgeServer()
        created = ok(server, "create", config=CONFIG, seed=7)
        handle = created["handle"]
        assert created["n"] == 4

        obs = ok(server, "reset", handle=handle)
        assert b64_to_array(obs["gov_obs"]).shape == (7,)
        assert b64_to_array(obs["hh_obs"]).shape == (4 * 9,)

        rng = np.random.default_rng(123)
        gov, hh = sample_actions(rng, 4)
        result = ok(server, "step", handle=handle,
                    gov_action=encode_array(gov),
                    hh_actions=encode_array(hh))
        assert result["done"] is False
        assert result["done_reason"] == 0
        assert np.isfinite(result["gov_reward"])
        assert b64_to_array(result["hh_rewards"]).shape == (4,)
        assert result["info"]["step"] == 0
        assert result["info"]["gdp"] > 0

        metrics = ok(server, "get_metrics", handle=handle)
        assert metrics["steps"] == 1
        assert metrics["csv"].split("\n")[0] == ",".join(CSV_COLUMNS)

        assert ok(server, "close", handle=handle) == {"closed": True}
        assert err(server, "step", handle=handle,
                   gov_action=encode_array(gov),
                   hh_actions=encode_array(hh))["type"] == "IllegalState"

    def test_step_accepts_plain_lists(self):
        server = BridgeServer()
        handle = ok(server, "create", config=CONFIG, seed=7)["handle"]
        ok(server, "reset", handle=handle)
        result = ok(server, "step", handle=handle,
                    gov_action=[0.1, 0.1, 0.1, 0.1, 0.1],
                    hh_actions=[0.5] * 8)
        assert result["info"]["step"] == 0

    def test_handles_are_independent(self):
        server = BridgeServer()
        h1 = ok(server, "create", config=CONFIG, seed=7)["handle"]
        h2 = ok(server, "create", config=CONFIG, seed=7)["handle"]
        assert h1 != h2
        obs1 = ok(server, "reset", handle=h1, seed=5)
        obs2 = ok(server, "reset", handle=h2, seed=5)
        rng = np.random.default_rng(9)
        gov, hh = sample_actions(rng, 4)
        ok(server, "step", handle=h1, gov_action=encode_array(gov),
           hh_actions=encode_array(hh))
        # h2 still sits at its reset state and repeats h1's first step
        again = ok(server, "step", handle=h2, gov_action=encode_array(gov),
                   hh_actions=encode_array(hh))
        assert again["info"]["step"] == 0
        assert obs1["gov_obs"] == obs2["gov_obs"]

    def test_stats_counts_open_handles(self):
        server = BridgeServer()
        assert ok(server, "stats")["open_handles"] == 0
        h1 = ok(server, "create", config=CONFIG, seed=0)["handle"]
        ok(server, "create", config=CONFIG, seed=0)
        stats = ok(server, "stats")
        assert stats["open_handles"] == 2
        assert stats["rss_bytes"] != 0
        ok(server, "close", handle=h1)
        assert ok(server, "stats")["open_handles"] == 1

    def test_shutdown(self):
        server = BridgeServer()
        assert ok(server, "shutdown") == {"bye": True}
        assert server.running is False

    def test_max_steps_done_reason(self):
        config = dict(CONFIG, model=dict(CONFIG["model"],
                                         episode_max_steps=3))
        server = BridgeServer()
        handle = ok(server, "create", config=config, seed=7)["handle"]
        ok(server, "reset", handle=handle)
        act = {"gov_action": [0.1, 0.1, 0.1, 0.1, 0.1],
               "hh_actions": [0.6] * 8}
        for _ in range(2):
            result = ok(server, "step", handle=handle, **act)
            assert result["done_reason"] == 0
        result = ok(server, "step", handle=handle, **act)
        assert result["done"] is True
        assert result["done_reason"] == 1


class TestErrors:
    def test_wrong_action_size(self):
        server = BridgeServer()
        handle = ok(server, "create", config=CONFIG, seed=7)["handle"]
        ok(server, "reset", handle=handle)
        error = err(server, "step", handle=handle,
                    gov_action=encode_array(np.zeros(4)),
                    hh_actions=encode_array(np.full(8, 0.5)))
        assert error["type"] == "ShapeError"
        assert "gov_action" in error["message"]

    def test_step_before_reset(self):
        server = BridgeServer()
        handle = ok(server, "create", config=CONFIG, seed=7)["handle"]
        error = err(server, "step", handle=handle,
                    gov_action=[0.1] * 5, hh_actions=[0.5] * 8)
        assert error["type"] == "IllegalState"

    def test_unknown_handle(self):
        server = BridgeServer()
        assert err(server, "reset", handle="nope")["type"] == "IllegalState"
        assert err(server, "close", handle="nope")["type"] == "IllegalState"

    def test_bad_config_key(self):
        server = BridgeServer()
        error = err(server, "create", config={"modle": {}})
        assert error["type"] == "ConfigError"
        assert "modle" in error["message"]

    def test_bad_model_key(self):
        server = BridgeServer()
        error = err(server, "create",
                    config={"model": {"n_houses": 4}})
        assert error["type"] == "ConfigError"
        assert "n_houses" in error["message"]

    def test_bad_task(self):
        server = BridgeServer()
        error = err(server, "create", config={"task": "fame"})
        assert error["type"] == "ConfigError"

    def test_unknown_op(self):
        server = BridgeServer()
        error = err(server, "launch")
        assert error["type"] == "BadRequest"

    def test_non_dict_request(self):
        server = BridgeServer()
        reply = json.loads(server.handle_line("[1, 2, 3]"))
        assert reply["ok"] is False
        assert reply["error"]["type"] == "BadRequest"

    def test_invalid_json_line(self):
        server = BridgeServer()
        reply = json.loads(server.handle_line("{nope"))
        assert reply["ok"] is False
        assert reply["error"]["type"] == "BadRequest"
        assert "JSON" in reply["error"]["message"]

    def test_id_echoed_on_errors(self):
        server = BridgeServer()
        reply = json.loads(server.handle_line(
            json.dumps({"id": "req-77", "op": "launch"})))
        assert reply["id"] == "req-77"


class TestParity:
    """The bridge must reproduce direct environment results bit for bit."""

    def test_thirty_steps_match(self):
        server = BridgeServer()
        handle = ok(server, "create", config=CONFIG, seed=7)["handle"]
        env = direct_env(seed=7)

        bridge_obs = ok(server, "reset", handle=handle)
        gov_obs, hh_obs = env.reset()
        assert np.array_equal(b64_to_array(bridge_obs["gov_obs"]), gov_obs)
        assert np.array_equal(
            b64_to_array(bridge_obs["hh_obs"]).reshape(4, 9), hh_obs)

        rng = np.random.default_rng(123)
        episode_seed = 100
        for _ in range(30):
            gov, hh = sample_actions(rng, 4)
            got = ok(server, "step", handle=handle,
                     gov_action=encode_array(gov),
                     hh_actions=encode_array(hh))
            want = env.step(gov, hh)
            assert np.array_equal(b64_to_array(got["gov_obs"]), want.gov_obs)
            assert np.array_equal(
                b64_to_array(got["hh_obs"]).reshape(4, 9), want.hh_obs)
            assert got["gov_reward"] == want.gov_reward
            assert np.array_equal(b64_to_array(got["hh_rewards"]),
                                  want.hh_rewards)
            assert got["done"] == want.done
            want_reason = 0 if want.done_reason is None \
                else int(want.done_reason)
            assert got["done_reason"] == want_reason
            if want.done:
                bridge_obs = ok(server, "reset", handle=handle,
                                seed=episode_seed)
                gov_obs, hh_obs = env.reset(seed=episode_seed)
                assert np.array_equal(b64_to_array(bridge_obs["gov_obs"]),
                                      gov_obs)
                episode_seed += 1

        got = ok(server, "get_metrics", handle=handle)
        assert got["csv"] == __import__("taxecon.metrics", fromlist=["x"]) \
            .metrics_to_csv(env.metrics_rows)


class TestServeStdio:
    def test_request_stream(self):
        lines = [
            json.dumps({"id": 1, "op": "create", "config": CONFIG,
                        "seed": 7}),
            "",
            json.dumps({"id": 2, "op": "reset", "handle": "env1"}),
            json.dumps({"id": 3, "op": "shutdown"}),
            json.dumps({"id": 4, "op": "stats"}),
        ]
        out = io.StringIO()
        serve_stdio(stdin=io.StringIO("\n".join(lines) + "\n"), stdout=out)
        replies = [json.loads(line) for line in
                   out.getvalue().strip().split("\n")]
        # the blank line is skipped and nothing after shutdown is served
        assert [r["id"] for r in replies] == [1, 2, 3]
        assert all(r["ok"] for r in replies)
        assert replies[2]["result"] == {"bye": True}


class TestServeSubprocess:
    def test_cli_serve_round_trip(self):
        requests = "\n".join([
            json.dumps({"id": 1, "op": "create", "config": CONFIG,
                        "seed": 7}),
            json.dumps({"id": 2, "op": "reset", "handle": "env1"}),
            json.dumps({"id": 3, "op": "step", "handle": "env1",
                        "gov_action": [0.1, 0.1, 0.1, 0.1, 0.1],
                        "hh_actions": [0.5] * 8}),
            json.dumps({"id": 4, "op": "shutdown"}),
        ]) + "\n"
        proc = subprocess.run(
            [sys.executable, "-m", "taxecon.cli", "serve"],
            input=requests, capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0, proc.stderr
        replies = [json.loads(line) for line in
                   proc.stdout.strip().split("\n")]
        assert [r["ok"] for r in replies] == [True] * 4
        assert replies[2]["result"]["info"]["step"] == 0
