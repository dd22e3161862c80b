"""REINFORCE training: query sampling, rollouts, moving-average baseline, schedule."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .env import SchemaEnv, trajectory_to_metapath
from .errors import ConfigError, ValidationError
from .graph import InstanceGraph, Query, SchemaGraph, queries_for_relation
from .metapath import EvalCache, evaluate_cached, reward
from .policy import (Adam, PolicyParams, RolloutBatch, backward_episodes,
                     episodes_to_trajectories, run_episodes)

log = logging.getLogger(__name__)

STATS_COLUMNS = ("iter", "relation", "arrival", "coverage", "confidence", "reward",
                 "baseline", "entropy")


@dataclass
class TrainConfig:
    i_base: int = 500
    i_r: int = 5
    k: int = 20
    n: int = 40
    lambda1: float = 1.0
    lambda2: float = 1.0
    alpha: float = 0.0005
    beta: float = 0.05
    beta_decay: float = 0.9
    seed: int = 0
    # optional narrowing of each relation's type-pair set
    query_threshold: float | None = None

    def __post_init__(self):
        for name in ("i_base", "i_r", "k", "n"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.beta < 0 or self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("beta and lambda weights must be non-negative")
        if not 0 < self.beta_decay <= 1:
            raise ConfigError("beta_decay must be in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainStats:
    relation: list = field(default_factory=list)
    arrival: list = field(default_factory=list)
    coverage: list = field(default_factory=list)
    confidence: list = field(default_factory=list)
    reward: list = field(default_factory=list)
    baseline: list = field(default_factory=list)
    entropy: list = field(default_factory=list)

    def __len__(self):
        return len(self.reward)

    def append(self, **row):
        for k, v in row.items():
            getattr(self, k).append(v)

    def extend(self, other: "TrainStats"):
        for k in ("relation", "arrival", "coverage", "confidence", "reward", "baseline", "entropy"):
            getattr(self, k).extend(getattr(other, k))

    def rows(self):
        for i in range(len(self)):
            yield (i, self.relation[i], self.arrival[i], self.coverage[i], self.confidence[i],
                   self.reward[i], self.baseline[i], self.entropy[i])

    def write_csv(self, path, relation_names=None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(STATS_COLUMNS)
            for row in self.rows():
                row = list(row)
                if relation_names is not None:
                    row[1] = relation_names[row[1]]
                w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def sample_queries(g: InstanceGraph, schema: SchemaGraph, r_q: int, k: int, rng,
                   threshold: float | None = None, support=None) -> list[Query]:
    """K type pairs drawn with replacement, weighted by their instance counts."""
    if support is None:
        support = queries_for_relation(g, schema, r_q, threshold)
    if not support:
        raise ValidationError(f"relation {r_q} has no supporting type pair")
    counts = np.array([s.count for s in support], dtype=float)
    idx = rng.choice(len(support), size=k, replace=True, p=counts / counts.sum())
    return [Query(support[i].src, r_q, support[i].dst) for i in idx]


class Trainer:
    """Holds what one training run shares across iterations.

    ``g``/``schema`` are the training-time graph (inductive runs pass the
    graph with held-out relations removed).
    """

    def __init__(self, g: InstanceGraph, schema: SchemaGraph, env: SchemaEnv, params: PolicyParams,
                 cfg: TrainConfig, rng=None, adam: Adam | None = None, cache: EvalCache | None = None):
        self.g = g
        self.schema = schema
        self.env = env
        self.params = params
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.adam = adam if adam is not None else Adam(params, cfg.alpha)
        self.cache = cache if cache is not None else EvalCache()
        self._support = {}
        self.rollouts = 0  # trajectories sampled so far (search-budget accounting)

    def support(self, r_q: int):
        if r_q not in self._support:
            self._support[r_q] = queries_for_relation(self.g, self.schema, r_q, self.cfg.query_threshold)
        return self._support[r_q]

    def score(self, trajectories) -> tuple[np.ndarray, list]:
        rewards = np.zeros(len(trajectories))
        recs = []
        for j, tr in enumerate(trajectories):
            m = trajectory_to_metapath(tr)
            rec = evaluate_cached(self.cache, self.g, m, tr.query.relation) if m is not None else None
            recs.append(rec)
            rewards[j] = reward(rec, tr.arrived, self.cfg.lambda1, self.cfg.lambda2)
        return rewards, recs

    def rollout(self, queries, n: int, keep_cache=False):
        """N rollouts for each query; returns (RolloutBatch, EpisodePass)."""
        expanded = [q for q in queries for _ in range(n)]
        ep = run_episodes(self.params, self.env, expanded, rng=self.rng, keep_cache=keep_cache)
        trs = episodes_to_trajectories(self.env, ep)
        rewards, recs = self.score(trs)
        self.rollouts += len(trs)
        return RolloutBatch(trs, rewards, ep.entropies, ep.choice, recs), ep

    def train_relation_block(self, r_q: int, block_index: int) -> TrainStats:
        cfg = self.cfg
        beta = cfg.beta * cfg.beta_decay ** block_index
        stats = TrainStats()
        support = self.support(r_q)
        b = None
        for _ in range(cfg.i_base):
            qs = sample_queries(self.g, self.schema, r_q, cfg.k, self.rng, support=support)
            batch, ep = self.rollout(qs, cfg.n, keep_cache=True)
            rbar = float(batch.rewards.mean())
            b = rbar if b is None else 0.9 * b + 0.1 * rbar
            B = len(batch.trajectories)
            adv = batch.rewards - b
            grads = backward_episodes(self.params, ep, adv / B, beta / (B * self.env.max_hops))
            self.params = self.adam.step(self.params, grads)
            recs = [r for r in batch.records]
            stats.append(
                relation=r_q,
                arrival=float(np.mean([t.arrived for t in batch.trajectories])),
                coverage=float(np.mean([r.coverage if r else 0.0 for r in recs])),
                confidence=float(np.mean([r.confidence if r else 0.0 for r in recs])),
                reward=rbar,
                baseline=float(b),
                entropy=float(ep.entropies.mean()),
            )
        log.info("block %d relation %d: reward %.3f arrival %.3f", block_index, r_q,
                 stats.reward[-1], stats.arrival[-1])
        return stats

    def train_multi_relation(self, relations) -> TrainStats:
        relations = list(relations)
        if not relations:
            raise ConfigError("need at least one training relation")
        full = TrainStats()
        block = 0
        for _ in range(self.cfg.i_r):
            for r_q in relations:
                full.extend(self.train_relation_block(r_q, block))
                block += 1
        return full


def relation_schedule(relations, i_base: int, i_r: int) -> list:
    """The per-iteration relation sequence the round-robin schedule visits."""
    return [r for _ in range(i_r) for r in relations for _ in range(i_base)]


def train_relation_block(params, env, g, schema, r_q, cfg: TrainConfig, block_index=0, rng=None):
    tr = Trainer(g, schema, env, params, cfg, rng=rng)
    stats = tr.train_relation_block(r_q, block_index)
    return tr.params, stats


def train_multi_relation(params, env, g, schema, relations, cfg: TrainConfig, rng=None):
    tr = Trainer(g, schema, env, params, cfg, rng=rng)
    stats = tr.train_multi_relation(relations)
    return tr.params, stats
