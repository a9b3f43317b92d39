"""Real-valued genetic search and the static-tax-rule optimizer built on it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import HeathcotePolicy
from .env import ActionBounds, EconomyEnv
from .errors import CapitalExhaustedError, ConfigError

# Gene groups of the policy genome: within-group means map to the five
# government instruments in order.
GENE_GROUPS = ((0, 1, 2), (3, 4), (5, 6, 7), (8, 9), (10, 11))


@dataclass(frozen=True)
class GAConfig:
    """Knobs of the elitist generational GA."""

    dna_size: int = 12
    pop_size: int = 100
    crossover_rate: float = 0.8
    mutation_rate: float = 0.1
    max_generations: int = 200
    tournament_size: int = 3
    gene_lo: float = 0.0
    gene_hi: float = 1.0

    def __post_init__(self):
        if self.dna_size < 1 or self.pop_size < 2:
            raise ConfigError("need dna_size >= 1 and pop_size >= 2")
        if not 0 <= self.crossover_rate <= 1 or not 0 <= self.mutation_rate <= 1:
            raise ConfigError("rates must lie in [0, 1]")
        if self.max_generations < 1:
            raise ConfigError("max_generations must be at least 1")
        if self.gene_hi <= self.gene_lo:
            raise ConfigError("gene bounds must be ordered")


@dataclass
class GAResult:
    best_genome: np.ndarray
    best_fitness: float
    history: list = field(default_factory=list)  # best fitness per generation


def ga_optimize(fitness_fn, config: GAConfig, seed: int = 0) -> GAResult:
    """Maximize fitness_fn(genome) over [gene_lo, gene_hi]^dna_size.

    Generational GA with tournament parent selection, uniform crossover
    (pairwise gene swaps with probability 0.5 for pairs selected at the
    crossover rate), uniform-redraw mutation per gene at the mutation rate,
    and single-individual elitism, so the best-so-far fitness is
    nondecreasing across generations.
    """
    cfg = config
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pop = rng.uniform(cfg.gene_lo, cfg.gene_hi,
                      size=(cfg.pop_size, cfg.dna_size))
    fitness = np.array([fitness_fn(g) for g in pop], dtype=np.float64)
    history = []
    for _ in range(cfg.max_generations):
        elite_idx = int(np.argmax(fitness))
        elite = pop[elite_idx].copy()
        elite_fit = float(fitness[elite_idx])
        history.append(elite_fit)

        # tournament selection of parents
        draws = rng.integers(0, cfg.pop_size,
                             size=(cfg.pop_size, cfg.tournament_size))
        winners = draws[np.arange(cfg.pop_size),
                        np.argmax(fitness[draws], axis=1)]
        children = pop[winners].copy()

        # uniform crossover over consecutive pairs
        for a in range(0, cfg.pop_size - 1, 2):
            if rng.random() < cfg.crossover_rate:
                swap = rng.random(cfg.dna_size) < 0.5
                tmp = children[a, swap].copy()
                children[a, swap] = children[a + 1, swap]
                children[a + 1, swap] = tmp

        # uniform-redraw mutation
        mutate = rng.random(children.shape) < cfg.mutation_rate
        redraw = rng.uniform(cfg.gene_lo, cfg.gene_hi, size=children.shape)
        children[mutate] = redraw[mutate]

        # elitism: best individual survives unchanged
        children[0] = elite
        pop = children
        fitness = np.array([fitness_fn(g) for g in pop], dtype=np.float64)
        fitness[0] = elite_fit  # fitness is deterministic; skip re-evaluation

    best_idx = int(np.argmax(fitness))
    history.append(float(fitness[best_idx]))
    return GAResult(pop[best_idx].copy(), float(fitness[best_idx]), history)


def decode_genome(genome, bounds: ActionBounds | None = None) -> np.ndarray:
    """Map a 12-gene genome in [0,1] to a government action.

    Gene-group means are scaled affinely into the action clamp bounds:
    genes {1-3} set the income tax rate, {4-5} its curvature, {6-8} the
    asset tax rate, {9-10} its curvature, {11-12} the spending share.
    """
    g = np.asarray(genome, dtype=np.float64)
    if g.shape != (12,):
        raise ConfigError(f"policy genome must have 12 genes, got {g.shape}")
    bounds = bounds or ActionBounds()
    lo, hi = bounds.lo(), bounds.hi()
    means = np.array([np.mean(g[list(idx)]) for idx in GENE_GROUPS])
    return lo + means * (hi - lo)


def ga_government_policy(params, distribution, task, config: GAConfig,
                         seed: int = 0, n_rollouts: int = 3,
                         episode_cap: int | None = None,
                         bounds: ActionBounds | None = None,
                         heathcote_kwargs: dict | None = None) -> GAResult:
    """Search for a static government action maximizing episodic reward.

    Fitness of a genome is the mean episodic government reward over
    n_rollouts seeded episodes in which households follow the analytic
    rule.  Rollout seeds derive only from `seed` and the rollout index, so
    fitness is a pure function of the genome and results are reproducible
    under any evaluation order.
    """
    bounds = bounds or ActionBounds()
    hk = heathcote_kwargs or {}

    def fitness(genome) -> float:
        action = decode_genome(genome, bounds)
        total = 0.0
        for r in range(n_rollouts):
            # fixed-key seeds: fitness is a pure function of the genome
            env_seed = np.random.SeedSequence(entropy=seed, spawn_key=(7, r, 0))
            pol_seed = np.random.SeedSequence(entropy=seed, spawn_key=(7, r, 1))
            env = EconomyEnv(params, distribution,
                             seed=int(env_seed.generate_state(1)[0]),
                             task=task, bounds=bounds)
            _, hh_obs = env.reset()
            policy = HeathcotePolicy(params.n_households, params,
                                     np.random.default_rng(pol_seed), **hk)
            ep_reward = 0.0
            cap = episode_cap or params.episode_max_steps
            for _ in range(cap):
                try:
                    result = env.step(action, policy.act(hh_obs))
                except CapitalExhaustedError:
                    break  # fiscal collapse ends the rollout
                hh_obs = result.hh_obs
                ep_reward += result.gov_reward
                if result.done:
                    break
            total += ep_reward
        return total / n_rollouts

    return ga_optimize(fitness, config, seed=seed)
