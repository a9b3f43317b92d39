"""Command line interface.

Subcommands:
    simulate     episodes under baseline policies, CSV metrics per episode
    train-bmfac  alternating leader/follower actor-critic training
    calibrate    solve for the hours scale hitting the wealth/income target
    bench        stepping throughput across population sizes
    serve        line-delimited JSON protocol over stdin/stdout

Exit code 0 on success, 1 on configuration problems (flags or config
file), 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .baselines import (
    GOVERNMENT_POLICIES,
    HOUSEHOLD_POLICIES,
    StaticGovernment,
    FreeMarketGovernment,
    RandomGovernment,
    make_household_policy,
)
from .bmfac import BiLevelTrainer
from .calibration import calibrate_hmax, default_wealth_table
from .config import RunConfig, load_config, write_manifest
from .env import ActionBounds, EconomyEnv
from .errors import ConfigError, TaxeconError
from .ga import decode_genome, ga_government_policy
from .metrics import RewardTask, metrics_to_csv


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as configuration errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="taxecon", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version",
                        version=f"taxecon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH",
                       help="INI configuration file")
        p.add_argument("--seed", type=int, help="base random seed")
        p.add_argument("--n", type=int, help="number of households")
        p.add_argument("--task", choices=[t.value for t in RewardTask],
                       help="government objective")
        p.add_argument("--out", metavar="DIR", help="output directory")

    p = sub.add_parser("simulate", help="run baseline-policy episodes")
    common(p)
    p.add_argument("--gov-policy", choices=GOVERNMENT_POLICIES)
    p.add_argument("--hh-policy", choices=HOUSEHOLD_POLICIES)
    p.add_argument("--episodes", type=int)
    p.add_argument("--threads", type=int)

    p = sub.add_parser("train-bmfac", help="train the two-level policies")
    common(p)

    p = sub.add_parser("calibrate", help="solve for the hours scale")
    common(p)

    p = sub.add_parser("bench", help="measure stepping throughput")
    common(p)
    p.add_argument("--episodes", type=int)

    p = sub.add_parser("serve", help="JSON protocol on stdin/stdout")
    common(p)
    return parser


def _resolve(args) -> RunConfig:
    """Load the config file and fold CLI overrides into it."""
    config = load_config(getattr(args, "config", None))
    run = config.run
    model = config.model
    policy = config.policy
    updates = {}
    for flag, key in (("seed", "seed"), ("task", "task"),
                      ("episodes", "episodes"), ("threads", "threads"),
                      ("out", "out")):
        value = getattr(args, flag, None)
        if value is not None:
            updates[key] = value
    if updates:
        run = dataclasses.replace(run, **updates)
    if getattr(args, "n", None) is not None:
        model = dataclasses.replace(model, n_households=args.n)
    pol_updates = {}
    if getattr(args, "gov_policy", None) is not None:
        pol_updates["gov_policy"] = args.gov_policy
    if getattr(args, "hh_policy", None) is not None:
        pol_updates["hh_policy"] = args.hh_policy
    if pol_updates:
        policy = dataclasses.replace(policy, **pol_updates)
    return dataclasses.replace(config, run=run, model=model, policy=policy)


def _out_dir(config: RunConfig) -> str:
    out = config.run.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _make_gov_policy(config: RunConfig, rng):
    name = config.policy.gov_policy
    if name == "free":
        return FreeMarketGovernment()
    if name == "random":
        return RandomGovernment(rng)
    if name == "ga":
        cap = config.policy.ga_episode_cap or None
        result = ga_government_policy(
            config.model, config.distribution, config.task_enum, config.ga,
            seed=config.run.seed, n_rollouts=config.policy.ga_rollouts,
            episode_cap=cap)
        return StaticGovernment(decode_genome(result.best_genome,
                                              ActionBounds()))
    raise ConfigError(f"unknown government policy {name!r}; "
                      f"choose from {GOVERNMENT_POLICIES}")


def _run_episode(config: RunConfig, episode: int, gov_policy):
    """One full episode; returns (csv_text, summary_scalars)."""
    seed = config.run.seed + episode
    env = EconomyEnv(config.model, config.distribution,
                     seed=config.run.seed, task=config.task_enum,
                     omega1=config.run.omega1, omega2=config.run.omega2)
    hh_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.run.seed,
                               spawn_key=(1, episode)))
    pol = config.policy
    kwargs = {}
    if pol.hh_policy == "heathcote":
        kwargs = {"sigma_theta": pol.sigma_theta,
                  "sigma_omega": pol.sigma_omega,
                  "normalizer": pol.normalizer}
    hh_policy = make_household_policy(
        pol.hh_policy, config.model.n_households, config.model, hh_rng,
        **kwargs)
    gov_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.run.seed,
                               spawn_key=(2, episode)))
    if isinstance(gov_policy, RandomGovernment):
        gov_policy = RandomGovernment(gov_rng, gov_policy.bounds)

    gov_obs, hh_obs = env.reset(seed=seed)
    total_gov_reward = 0.0
    while True:
        result = env.step(gov_policy.act(gov_obs), hh_policy.act(hh_obs))
        total_gov_reward += result.gov_reward
        gov_obs, hh_obs = result.gov_obs, result.hh_obs
        if result.done:
            break
    csv_text = metrics_to_csv(env.metrics_rows)
    rows = [m.row() for m in env.metrics_rows]
    years = len(rows)
    summary = {
        "episode": episode,
        "seed": seed,
        "years": years,
        "done_reason": int(env.done_reason),
        "gov_reward_total": total_gov_reward,
        "mean_social_welfare": float(np.nanmean([r[5] for r in rows])),
        "mean_gdp_per_capita":
            float(np.mean([r[1] for r in rows])) / config.model.n_households,
        "final_wealth_gini": rows[-1][3],
        "final_income_gini": rows[-1][4],
        "discounted_welfare": rows[-1][12],
    }
    return csv_text, summary


def _aggregate(summaries):
    keys = ("years", "gov_reward_total", "mean_social_welfare",
            "mean_gdp_per_capita", "final_wealth_gini", "final_income_gini",
            "discounted_welfare")
    agg = {}
    for key in keys:
        vals = np.array([s[key] for s in summaries], dtype=np.float64)
        agg[key] = {"mean": float(np.nanmean(vals)),
                    "std": float(np.nanstd(vals))}
    return agg


def cmd_simulate(args) -> int:
    config = _resolve(args)
    out = _out_dir(config)
    episodes = config.run.episodes
    threads = max(1, config.run.threads)
    gov_policy = _make_gov_policy(
        config, np.random.default_rng(config.run.seed))

    def worker(episode):
        return _run_episode(config, episode, gov_policy)

    if threads == 1:
        results = [worker(e) for e in range(episodes)]
    else:
        with concurrent.futures.ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(worker, range(episodes)))

    summaries = []
    for episode, (csv_text, summary) in enumerate(results):
        with open(os.path.join(out, f"episode_{episode:03d}.csv"), "w") as fh:
            fh.write(csv_text)
        summaries.append(summary)
    payload = {"episodes": summaries, "aggregate": _aggregate(summaries)}
    if isinstance(gov_policy, StaticGovernment):
        payload["gov_action"] = [float(x) for x in gov_policy.action]
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(os.path.join(out, "manifest.json"), config, "simulate",
                   config.run.seed)
    agg = payload["aggregate"]
    print(f"{episodes} episodes -> {out}")
    for key, stats in agg.items():
        print(f"  {key}: {stats['mean']:.6g} +/- {stats['std']:.6g}")
    return 0


def cmd_train(args) -> int:
    config = _resolve(args)
    out = _out_dir(config)
    env = EconomyEnv(config.model, config.distribution,
                     seed=config.run.seed, task=config.task_enum,
                     omega1=config.run.omega1, omega2=config.run.omega2)
    trainer = BiLevelTrainer(env, config.trainer, seed=config.run.seed)
    log_path = os.path.join(out, "training_log.csv")
    columns = ("epoch", "gov_reward", "household_reward", "hh_critic_loss",
               "hh_actor_loss", "gov_critic_loss", "gov_actor_loss",
               "env_steps")
    with open(log_path, "w") as fh:
        fh.write(",".join(columns) + "\n")

        def log_row(row):
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float)
                              else str(row[c]) for c in columns) + "\n")
            fh.flush()

        trainer.train(log_fn=log_row)
    trainer.save(os.path.join(out, "checkpoint.bin"))
    evaluation = trainer.evaluate()
    with open(os.path.join(out, "evaluation.json"), "w") as fh:
        json.dump(evaluation, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(os.path.join(out, "manifest.json"), config, "train-bmfac",
                   config.run.seed,
                   extra={"env_steps": trainer.total_env_steps,
                          "capital_exhaustions":
                              trainer.capital_exhaustion_count})
    print(f"trained {config.trainer.epochs} epochs "
          f"({trainer.total_env_steps} env steps) -> {out}")
    for key, value in evaluation.items():
        print(f"  {key}: {value:.6g}")
    return 0


def cmd_calibrate(args) -> int:
    config = _resolve(args)
    h_max = calibrate_hmax(config.model, config.distribution,
                           seed=config.run.seed)
    print(f"h_max = {h_max!r}")
    if config.run.out:
        out = _out_dir(config)
        with open(os.path.join(out, "calibration.json"), "w") as fh:
            json.dump({"h_max": h_max,
                       "target": config.model.wealth_income_ratio_target},
                      fh, indent=2)
            fh.write("\n")
        write_manifest(os.path.join(out, "manifest.json"), config,
                       "calibrate", config.run.seed)
    return 0


def _cpu_name() -> str:
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine()


def cmd_bench(args) -> int:
    config = _resolve(args)
    episodes = max(3, config.run.episodes)
    sizes = (10, 100, 1000, 10000)
    report = {
        "hardware": {"cpu": _cpu_name(), "cores": os.cpu_count(),
                     "platform": platform.platform(),
                     "python": platform.python_version(),
                     "numpy": np.__version__},
        "episodes_per_size": episodes,
        "results": [],
    }
    print(f"benchmark: {episodes} episodes per size on {report['hardware']['cpu']}")
    steps_per_run = 100
    for n in sizes:
        model = dataclasses.replace(config.model, n_households=n,
                                    gini_terminal_threshold=1.0)
        rates = []
        for episode in range(episodes):
            env = EconomyEnv(model, config.distribution,
                             seed=config.run.seed, task=config.task_enum)
            rng = np.random.default_rng(config.run.seed + episode)
            hh_policy = make_household_policy("random", n, model, rng)
            gov = FreeMarketGovernment()
            gov_obs, hh_obs = env.reset(seed=config.run.seed + episode)
            elapsed = 0.0
            # time only the step calls; resets on termination are untimed
            for _ in range(steps_per_run):
                a_g, a_h = gov.act(gov_obs), hh_policy.act(hh_obs)
                start = time.perf_counter()
                result = env.step(a_g, a_h)
                elapsed += time.perf_counter() - start
                gov_obs, hh_obs = result.gov_obs, result.hh_obs
                if result.done:
                    gov_obs, hh_obs = env.reset()
            rates.append(steps_per_run / elapsed)
        mean, std = float(np.mean(rates)), float(np.std(rates))
        report["results"].append(
            {"n_households": n, "steps_per_second_mean": mean,
             "steps_per_second_std": std})
        print(f"  n={n:>6}: {mean:10.1f} +/- {std:.1f} steps/s")
    if config.run.out:
        out = _out_dir(config)
        with open(os.path.join(out, "bench.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_serve(args) -> int:
    from .bridge import serve_stdio

    config = _resolve(args)
    serve_stdio(config)
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "train-bmfac": cmd_train,
    "calibrate": cmd_calibrate,
    "bench": cmd_bench,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except TaxeconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 2


if __name__ == "__main__":
    sys.exit(main())
