"""Uninformed meta-path generators used as comparison points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError
from .graph import Query, SchemaGraph
from .metapath import MetaPath

ENUMERATION_CAP = 10_000_000


@dataclass(frozen=True)
class SearchBudget:
    attempts: int
    multiplier: int = 1

    def __post_init__(self):
        if self.attempts < 1:
            raise ConfigError("a search budget needs at least one attempt")
        if self.multiplier < 1:
            raise ConfigError("budget multiplier must be >= 1")

    @property
    def total(self) -> int:
        return self.attempts * self.multiplier


def random_walk_metapaths(schema: SchemaGraph, q: Query, budget: SearchBudget, max_hops: int = 4,
                          rng=None, mask_direct: bool = True) -> set:
    """Uniform walks over schema out-edges; a walk stops at its first arrival.

    Like the agent, the walk may not take the direct (r_q, target) edge as
    its first move.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    found = set()
    for _ in range(budget.total):
        types, rels = [q.src_type], []
        cur = q.src_type
        for _ in range(max_hops):
            edges = schema.out_edges(cur)
            if mask_direct and not rels:
                edges = [e for e in edges if e != (q.relation, q.tgt_type)]
            if not edges:
                break
            r, cur = edges[rng.integers(len(edges))]
            rels.append(r)
            types.append(cur)
            if cur == q.tgt_type:
                found.add(MetaPath(tuple(types), tuple(rels)))
                break
    return found


def count_metapaths(schema: SchemaGraph, q: Query, max_hops: int = 4, mask_direct: bool = True) -> int:
    """Number of schema walks of 1..max_hops hops from src ending at tgt (DP)."""
    ways = {q.src_type: 1}
    total = 0
    for hop in range(max_hops):
        nxt: dict = {}
        for t, w in ways.items():
            for r, d in schema.out_edges(t):
                if mask_direct and hop == 0 and (r, d) == (q.relation, q.tgt_type):
                    continue
                nxt[d] = nxt.get(d, 0) + w
        total += nxt.get(q.tgt_type, 0)
        ways = nxt
    return total


def enumerate_metapaths(schema: SchemaGraph, q: Query, max_hops: int = 4, cap: int = ENUMERATION_CAP,
                        mask_direct: bool = True) -> set:
    """Every meta-path from src to tgt with at most ``max_hops`` relations.

    Paths may pass through the target type and continue. Refuses when the
    DP count exceeds ``cap``.
    """
    n = count_metapaths(schema, q, max_hops, mask_direct)
    if n > cap:
        raise ValidationError(f"enumeration would produce {n} meta-paths (cap {cap}); refusing")
    found = set()
    layer = [((q.src_type,), ())]
    for hop in range(max_hops):
        nxt = []
        for types, rels in layer:
            for r, d in schema.out_edges(types[-1]):
                if mask_direct and hop == 0 and (r, d) == (q.relation, q.tgt_type):
                    continue
                item = (types + (d,), rels + (r,))
                nxt.append(item)
                if d == q.tgt_type:
                    found.add(MetaPath(*item))
        layer = nxt
    return found
