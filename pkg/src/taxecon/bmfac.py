"""Bi-level mean-field actor-critic training for the fiscal game.

The government (leader) and the household population (followers, sharing
one actor and one critic pair) are trained in alternating phases.  Critics
are double-Q with Polyak-averaged targets; household critics condition on
the mean action of the other households.  Policies are diagonal Gaussians
in an unbounded pre-action space, squashed into the environment's action
bounds with a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import free_market_action
from .env import EconomyEnv
from .errors import (
    CapitalExhaustedError,
    ConfigError,
    DomainError,
    NonFiniteGradientError,
)
from .nn import (
    Adam,
    Mlp,
    gaussian_logprob,
    gaussian_logprob_grads,
    gaussian_sample,
    save_checkpoint,
    soft_update,
    split_gaussian,
    LOG_STD_MAX,
    LOG_STD_MIN,
)


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters of the alternating actor-critic trainer."""

    gamma: float = 0.975
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    buffer_capacity: int = 1_000_000
    init_exploration_steps: int = 1000
    batch_size: int = 128
    tau_soft: float = 5e-3
    hidden_size: int = 128
    n_household_updates: int = 10
    n_gov_updates: int = 10
    epochs: int = 1500
    epoch_length: int = 500
    eval_episodes: int = 10
    append_gov_to_hh_actor: bool = True

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ConfigError("buffer must hold at least one batch")
        if not 0 < self.tau_soft <= 1:
            raise ConfigError("tau_soft must lie in (0, 1]")


def mean_field_action(actions) -> np.ndarray:
    """Leave-one-out mean action over households (axis -2).

    For household i the mean is over all other households; requires at
    least two households.
    """
    a = np.asarray(actions, dtype=np.float64)
    n = a.shape[-2]
    if n < 2:
        raise DomainError("mean-field action needs at least two households")
    total = np.sum(a, axis=-2, keepdims=True)
    return (total - a) / (n - 1)


@dataclass
class Transition:
    gov_obs: np.ndarray
    hh_obs: np.ndarray
    gov_action: np.ndarray
    hh_actions: np.ndarray
    gov_reward: float
    hh_rewards: np.ndarray
    next_gov_obs: np.ndarray
    next_hh_obs: np.ndarray
    mean_actions: np.ndarray       # leave-one-out means at this step
    prev_mean_actions: np.ndarray  # mean-action input the actor saw
    done: bool


class ReplayBuffer:
    """Uniform-sampling ring buffer of transitions."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError("capacity must be positive")
        self.capacity = capacity
        self._data: list[Transition] = []
        self._next = 0

    def __len__(self):
        return len(self._data)

    def append(self, item: Transition):
        if len(self._data) < self.capacity:
            self._data.append(item)
        else:
            self._data[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng) -> list[Transition]:
        """Uniform sample without replacement within the batch."""
        if batch_size > len(self._data):
            raise DomainError("not enough transitions buffered")
        idx = rng.choice(len(self._data), size=batch_size, replace=False)
        return [self._data[i] for i in idx]


def _sigmoid(u):
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    ex = np.exp(u[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def squash(u, lo, hi):
    """Smooth saturating map from pre-actions into [lo, hi], then clamp."""
    return np.clip(lo + (hi - lo) * _sigmoid(u), lo, hi)


def unsquash(a, lo, hi):
    """Inverse of squash on the open interval."""
    frac = (a - lo) / (hi - lo)
    return np.log(frac) - np.log1p(-frac)


def _check_finite(grads):
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("non-finite gradient encountered")


class BiLevelTrainer:
    """Alternating leader/follower actor-critic on one environment.

    The environment's task defines the government reward.  All randomness
    (policy sampling, batch indices, environment shocks) derives from the
    construction seed, so a fixed seed reproduces the loss trajectory
    exactly.
    """

    def __init__(self, env: EconomyEnv, config: TrainerConfig, seed: int = 0):
        if env.n_households < 2:
            raise ConfigError("trainer needs at least two households")
        self.env = env
        self.cfg = config
        ss = np.random.SeedSequence(seed)
        k_init, k_policy, k_update = ss.spawn(3)
        self.rng_policy = np.random.default_rng(k_policy)
        self.rng_update = np.random.default_rng(k_update)
        init_rng = np.random.default_rng(k_init)

        h = config.hidden_size
        self.gov_lo, self.gov_hi = env.bounds.lo(), env.bounds.hi()
        self.hh_lo, self.hh_hi = env.hh_action_lo, env.hh_action_hi
        hh_actor_in = 9 + 2 + (5 if config.append_gov_to_hh_actor else 0)

        def mlp(dims, head="linear", name=""):
            return Mlp(dims, "relu", head, rng=init_rng, name=name)

        self.gov_actor = mlp([7, h, h, 10], "gaussian", "gov_actor")
        self.hh_actor = mlp([hh_actor_in, h, h, 4], "gaussian", "hh_actor")
        self.gov_q1 = mlp([14, h, h, 1], name="gov_q1")
        self.gov_q2 = mlp([14, h, h, 1], name="gov_q2")
        self.hh_q1 = mlp([18, h, h, 1], name="hh_q1")
        self.hh_q2 = mlp([18, h, h, 1], name="hh_q2")
        self._init_actor_output(self.hh_actor, np.full(2, 0.5),
                                self.hh_lo, self.hh_hi)
        self._init_actor_output(self.gov_actor,
                                free_market_action().as_array(),
                                self.gov_lo, self.gov_hi)
        self.gov_q1_t = self.gov_q1.copy()
        self.gov_q2_t = self.gov_q2.copy()
        self.hh_q1_t = self.hh_q1.copy()
        self.hh_q2_t = self.hh_q2.copy()

        self.opt_gov_actor = Adam(self.gov_actor.parameters, config.lr_actor)
        self.opt_hh_actor = Adam(self.hh_actor.parameters, config.lr_actor)
        self.opt_gov_q1 = Adam(self.gov_q1.parameters, config.lr_critic)
        self.opt_gov_q2 = Adam(self.gov_q2.parameters, config.lr_critic)
        self.opt_hh_q1 = Adam(self.hh_q1.parameters, config.lr_critic)
        self.opt_hh_q2 = Adam(self.hh_q2.parameters, config.lr_critic)

        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.total_env_steps = 0
        self.capital_exhaustion_count = 0
        self._gov_obs = None  # set on first collect

    @staticmethod
    def _init_actor_output(net: Mlp, action, lo, hi):
        """Zero the output layer; bias the mean head at the given action."""
        margin = 1e-3 * (hi - lo)
        target = np.clip(np.asarray(action, dtype=np.float64),
                         lo + margin, hi - margin)
        net.weights[-1][...] = 0.0
        k = net.dims[-1] // 2
        net.biases[-1][:k] = unsquash(target, lo, hi)
        net.biases[-1][k:] = -0.5  # moderate initial exploration noise

    # -- acting -----------------------------------------------------------

    def _gov_act(self, gov_obs, sample=True, rng=None):
        out = self.gov_actor.forward(gov_obs)
        mean, log_std = split_gaussian(out)
        u = gaussian_sample(mean, log_std, rng or self.rng_policy) if sample else mean
        return squash(u, self.gov_lo, self.gov_hi)[0]

    def _hh_actor_input(self, hh_obs, gov_action, prev_mean):
        n = hh_obs.shape[0]
        parts = [hh_obs]
        if self.cfg.append_gov_to_hh_actor:
            parts.append(np.broadcast_to(gov_action, (n, 5)))
        parts.append(prev_mean)
        return np.concatenate(parts, axis=1)

    def _hh_act(self, hh_obs, gov_action, prev_mean, sample=True, rng=None):
        out = self.hh_actor.forward(
            self._hh_actor_input(hh_obs, gov_action, prev_mean))
        mean, log_std = split_gaussian(out)
        u = gaussian_sample(mean, log_std, rng or self.rng_policy) if sample else mean
        return squash(u, self.hh_lo, self.hh_hi)

    def _mid_mean(self):
        mid = (self.hh_lo + self.hh_hi) / 2.0
        return np.tile(mid, (self.env.n_households, 1))

    # -- experience -------------------------------------------------------

    def collect(self, n_steps: int):
        """Run the environment with the current policies, buffering steps.

        Returns (mean government reward, mean household reward) over the
        collected steps.
        """
        env = self.env
        if self._gov_obs is None:
            self._gov_obs, self._hh_obs = env.reset()
            self._prev_mean = self._mid_mean()
        gov_r, hh_r = [], []
        for _ in range(n_steps):
            a_g = self._gov_act(self._gov_obs)
            a_h = self._hh_act(self._hh_obs, a_g, self._prev_mean)
            try:
                result = env.step(a_g, a_h)
            except CapitalExhaustedError:
                # fiscal collapse: the step produced no state, end the episode
                self.capital_exhaustion_count += 1
                self._gov_obs, self._hh_obs = env.reset()
                self._prev_mean = self._mid_mean()
                continue
            mean_a = mean_field_action(a_h)
            self.buffer.append(Transition(
                self._gov_obs, self._hh_obs, a_g, a_h,
                result.gov_reward, result.hh_rewards,
                result.gov_obs, result.hh_obs,
                mean_a, self._prev_mean, result.done))
            gov_r.append(result.gov_reward)
            hh_r.append(float(np.mean(result.hh_rewards)))
            self.total_env_steps += 1
            if result.done:
                self._gov_obs, self._hh_obs = env.reset()
                self._prev_mean = self._mid_mean()
            else:
                self._gov_obs, self._hh_obs = result.gov_obs, result.hh_obs
                self._prev_mean = mean_a
        if not gov_r:
            return float("nan"), float("nan")
        return float(np.mean(gov_r)), float(np.mean(hh_r))

    def _stack(self, batch):
        b = {
            "og": np.stack([t.gov_obs for t in batch]),
            "oh": np.stack([t.hh_obs for t in batch]),
            "ag": np.stack([t.gov_action for t in batch]),
            "ah": np.stack([t.hh_actions for t in batch]),
            "rg": np.array([t.gov_reward for t in batch]),
            "rh": np.stack([t.hh_rewards for t in batch]),
            "og2": np.stack([t.next_gov_obs for t in batch]),
            "oh2": np.stack([t.next_hh_obs for t in batch]),
            "abar": np.stack([t.mean_actions for t in batch]),
            "abar_prev": np.stack([t.prev_mean_actions for t in batch]),
            "done": np.array([float(t.done) for t in batch]),
        }
        return b

    def _sample_gov(self, og, rng):
        out = self.gov_actor.forward(og)
        mean, log_std = split_gaussian(out)
        u = gaussian_sample(mean, log_std, rng)
        return squash(u, self.gov_lo, self.gov_hi)

    def _sample_hh(self, oh, ag, prev_mean, rng):
        """Sample household actions for a (B, N, ...) block; returns (B, N, 2)."""
        B, N = oh.shape[0], oh.shape[1]
        flat_in = self._hh_actor_input_batch(oh, ag, prev_mean)
        out = self.hh_actor.forward(flat_in)
        mean, log_std = split_gaussian(out)
        u = gaussian_sample(mean, log_std, rng)
        return squash(u, self.hh_lo, self.hh_hi).reshape(B, N, 2)

    def _hh_actor_input_batch(self, oh, ag, prev_mean):
        B, N = oh.shape[0], oh.shape[1]
        parts = [oh.reshape(B * N, -1)]
        if self.cfg.append_gov_to_hh_actor:
            parts.append(np.repeat(ag, N, axis=0))
        parts.append(prev_mean.reshape(B * N, -1))
        return np.concatenate(parts, axis=1)

    # -- updates ----------------------------------------------------------

    def _critic_step(self, net, opt, q_in, y):
        q, cache = net.forward(q_in, want_cache=True)
        err = q[:, 0] - y
        loss = float(np.mean(err * err))
        grads = net.backward(cache, (2.0 * err / err.size)[:, None])
        _check_finite(grads)
        opt.step(grads)
        return loss

    def _actor_step(self, net, opt, actor_in, weight, lo, hi, critic_in_fn):
        """One policy-gradient step: maximize E[logpi(u) * Q(squash(u))].

        critic_in_fn maps squashed fresh actions to the critic input rows;
        weight is computed from the critic on those rows and treated as a
        constant.
        """
        out, cache = net.forward(actor_in, want_cache=True)
        mean, log_std = split_gaussian(out)
        u = gaussian_sample(mean, log_std, self.rng_update)
        a_new = squash(u, lo, hi)
        w = weight(critic_in_fn(a_new))
        logp = gaussian_logprob(mean, log_std, u)
        loss = float(-np.mean(logp * w))
        d_mean, d_log_std = gaussian_logprob_grads(mean, log_std, u)
        k = out.shape[1] // 2
        scale = (-w / u.shape[0])[:, None]
        g_out = np.empty_like(out)
        g_out[:, :k] = scale * d_mean
        g_out[:, k:] = scale * d_log_std
        # clamped log-std entries get no gradient
        raw_ls = out[:, k:]
        g_out[:, k:][(raw_ls < LOG_STD_MIN) | (raw_ls > LOG_STD_MAX)] = 0.0
        grads = net.backward(cache, g_out)
        _check_finite(grads)
        opt.step(grads)
        return loss

    def household_update(self, batch=None):
        """One critic + one actor step for the shared household networks."""
        cfg = self.cfg
        if batch is None:
            if len(self.buffer) < cfg.batch_size:
                return None
            batch = self.buffer.sample(cfg.batch_size, self.rng_update)
        b = self._stack(batch)
        B, N = b["oh"].shape[0], b["oh"].shape[1]

        # one-sample mean-field value at the next observation
        ag2 = self._sample_gov(b["og2"], self.rng_update)
        ah2 = self._sample_hh(b["oh2"], ag2, b["abar"], self.rng_update)
        abar2 = mean_field_action(ah2)
        q_in2 = np.concatenate([
            b["oh2"].reshape(B * N, -1), np.repeat(ag2, N, axis=0),
            ah2.reshape(B * N, -1), abar2.reshape(B * N, -1)], axis=1)
        q1t = self.hh_q1_t.forward(q_in2)[:, 0]
        q2t = self.hh_q2_t.forward(q_in2)[:, 0]
        v_next = np.minimum(q1t, q2t)
        mask = np.repeat(1.0 - b["done"], N)
        y = b["rh"].reshape(-1) + cfg.gamma * mask * v_next

        q_in = np.concatenate([
            b["oh"].reshape(B * N, -1), np.repeat(b["ag"], N, axis=0),
            b["ah"].reshape(B * N, -1), b["abar"].reshape(B * N, -1)], axis=1)
        c1 = self._critic_step(self.hh_q1, self.opt_hh_q1, q_in, y)
        c2 = self._critic_step(self.hh_q2, self.opt_hh_q2, q_in, y)

        actor_in = self._hh_actor_input_batch(b["oh"], b["ag"], b["abar_prev"])
        oh_flat = b["oh"].reshape(B * N, -1)
        ag_rep = np.repeat(b["ag"], N, axis=0)
        abar_flat = b["abar"].reshape(B * N, -1)

        def critic_in(a_new):
            return np.concatenate([oh_flat, ag_rep, a_new, abar_flat], axis=1)

        a_loss = self._actor_step(
            self.hh_actor, self.opt_hh_actor, actor_in,
            lambda rows: self.hh_q1.forward(rows)[:, 0],
            self.hh_lo, self.hh_hi, critic_in)

        soft_update(self.hh_q1_t, self.hh_q1, cfg.tau_soft)
        soft_update(self.hh_q2_t, self.hh_q2, cfg.tau_soft)
        return {"hh_critic_loss": (c1 + c2) / 2.0, "hh_actor_loss": a_loss}

    def government_update(self, batch=None):
        """One critic + one actor step for the government networks."""
        cfg = self.cfg
        if batch is None:
            if len(self.buffer) < cfg.batch_size:
                return None
            batch = self.buffer.sample(cfg.batch_size, self.rng_update)
        b = self._stack(batch)
        B, N = b["oh"].shape[0], b["oh"].shape[1]

        ag2 = self._sample_gov(b["og2"], self.rng_update)
        ah2 = self._sample_hh(b["oh2"], ag2, b["abar"], self.rng_update)
        mbar2 = np.mean(ah2, axis=1)
        q_in2 = np.concatenate([b["og2"], ag2, mbar2], axis=1)
        q1t = self.gov_q1_t.forward(q_in2)[:, 0]
        q2t = self.gov_q2_t.forward(q_in2)[:, 0]
        y = b["rg"] + cfg.gamma * (1.0 - b["done"]) * np.minimum(q1t, q2t)

        mbar = np.mean(b["ah"], axis=1)
        q_in = np.concatenate([b["og"], b["ag"], mbar], axis=1)
        c1 = self._critic_step(self.gov_q1, self.opt_gov_q1, q_in, y)
        c2 = self._critic_step(self.gov_q2, self.opt_gov_q2, q_in, y)

        og, oh, abar_prev = b["og"], b["oh"], b["abar_prev"]

        def critic_in(a_g_new):
            # households respond to the candidate government action
            ah_new = self._sample_hh(oh, a_g_new, abar_prev, self.rng_update)
            return np.concatenate([og, a_g_new, np.mean(ah_new, axis=1)],
                                  axis=1)

        a_loss = self._actor_step(
            self.gov_actor, self.opt_gov_actor, og,
            lambda rows: self.gov_q1.forward(rows)[:, 0],
            self.gov_lo, self.gov_hi, critic_in)

        soft_update(self.gov_q1_t, self.gov_q1, cfg.tau_soft)
        soft_update(self.gov_q2_t, self.gov_q2, cfg.tau_soft)
        return {"gov_critic_loss": (c1 + c2) / 2.0, "gov_actor_loss": a_loss}

    # -- driver -----------------------------------------------------------

    def train(self, epochs: int | None = None, log_fn=None):
        """Alternating training; returns one stats dict per epoch."""
        cfg = self.cfg
        epochs = cfg.epochs if epochs is None else epochs
        if cfg.init_exploration_steps > 0:
            self.collect(cfg.init_exploration_steps)
        history = []
        for epoch in range(epochs):
            g_r1, h_r1 = self.collect(cfg.epoch_length)
            h_losses = {}
            for _ in range(cfg.n_household_updates):
                out = self.household_update()
                if out:
                    h_losses = out
            g_r2, h_r2 = self.collect(cfg.epoch_length)
            g_losses = {}
            for _ in range(cfg.n_gov_updates):
                out = self.government_update()
                if out:
                    g_losses = out
            row = {
                "epoch": epoch,
                "gov_reward": (g_r1 + g_r2) / 2.0,
                "household_reward": (h_r1 + h_r2) / 2.0,
                "hh_critic_loss": h_losses.get("hh_critic_loss", float("nan")),
                "hh_actor_loss": h_losses.get("hh_actor_loss", float("nan")),
                "gov_critic_loss": g_losses.get("gov_critic_loss", float("nan")),
                "gov_actor_loss": g_losses.get("gov_actor_loss", float("nan")),
                "env_steps": self.total_env_steps,
            }
            history.append(row)
            if log_fn:
                log_fn(row)
        return history

    def evaluate(self, n_episodes: int | None = None, seed: int = 10_000,
                 deterministic: bool = True):
        """Run evaluation episodes with the (default: mean) policy.

        Returns mean per-step household reward, government reward, and
        episode length over the episodes.
        """
        cfg = self.cfg
        n_episodes = cfg.eval_episodes if n_episodes is None else n_episodes
        eval_rng = np.random.default_rng(seed)
        hh_rewards, gov_rewards, lengths = [], [], []
        for ep in range(n_episodes):
            gov_obs, hh_obs = self.env.reset(seed=seed + ep)
            prev_mean = self._mid_mean()
            steps = 0
            while True:
                a_g = self._gov_act(gov_obs, sample=not deterministic,
                                    rng=eval_rng)
                a_h = self._hh_act(hh_obs, a_g, prev_mean,
                                   sample=not deterministic, rng=eval_rng)
                try:
                    result = self.env.step(a_g, a_h)
                except CapitalExhaustedError:
                    self.capital_exhaustion_count += 1
                    break
                hh_rewards.append(float(np.mean(result.hh_rewards)))
                gov_rewards.append(result.gov_reward)
                prev_mean = mean_field_action(a_h)
                gov_obs, hh_obs = result.gov_obs, result.hh_obs
                steps += 1
                if result.done:
                    break
            lengths.append(steps)
        self._gov_obs = None  # force a fresh reset before further collection
        return {
            "mean_household_reward":
                float(np.mean(hh_rewards)) if hh_rewards else float("nan"),
            "mean_gov_reward":
                float(np.mean(gov_rewards)) if gov_rewards else float("nan"),
            "mean_episode_length": float(np.mean(lengths)),
        }

    def save(self, path):
        nets = {
            "gov_actor": self.gov_actor, "hh_actor": self.hh_actor,
            "gov_q1": self.gov_q1, "gov_q2": self.gov_q2,
            "hh_q1": self.hh_q1, "hh_q2": self.hh_q2,
            "gov_q1_t": self.gov_q1_t, "gov_q2_t": self.gov_q2_t,
            "hh_q1_t": self.hh_q1_t, "hh_q2_t": self.hh_q2_t,
        }
        save_checkpoint(path, nets)

    def load(self, path):
        from .nn import load_checkpoint

        nets = load_checkpoint(path)
        for attr in ("gov_actor", "hh_actor", "gov_q1", "gov_q2", "hh_q1",
                     "hh_q2", "gov_q1_t", "gov_q2_t", "hh_q1_t", "hh_q2_t"):
            loaded = nets[attr]
            current = getattr(self, attr)
            if loaded.dims != current.dims:
                raise ConfigError(
                    f"checkpoint net {attr} dims {loaded.dims} do not match "
                    f"{current.dims}")
            for p_dst, p_src in zip(current.parameters, loaded.parameters):
                p_dst[...] = p_src
