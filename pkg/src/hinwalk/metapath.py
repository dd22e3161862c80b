"""Meta-path connectivity and the scores derived from it.

Connectivity is computed with chained sparse products: for a meta-path
t1 -r1-> t2 ... -> tl the reach matrix is
``bin(S(t1) A(r1) S(t2)) ... A(r_{l-1}) S(tl)``, where ``S(t)`` selects the
entities of type ``t`` and ``bin`` clips every entry back to 1.  Only the
pair set matters, so the products never carry path counts forward.
"""
from __future__ import annotations

import re
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ParseError, ValidationError
from .graph import InstanceGraph, Query, SchemaGraph

REACH_CACHE_SIZE = 4096


@dataclass(frozen=True)
class MetaPath:
    node_types: tuple
    relations: tuple

    def __post_init__(self):
        object.__setattr__(self, "node_types", tuple(int(t) for t in self.node_types))
        object.__setattr__(self, "relations", tuple(int(r) for r in self.relations))
        if len(self.node_types) != len(self.relations) + 1 or len(self.node_types) < 2:
            raise ValidationError(
                f"meta-path needs len(types) == len(relations) + 1 >= 2, got "
                f"{len(self.node_types)} types / {len(self.relations)} relations"
            )

    @property
    def head(self) -> int:
        return self.node_types[0]

    @property
    def tail(self) -> int:
        return self.node_types[-1]

    @property
    def hops(self) -> int:
        return len(self.relations)

    @property
    def encoding(self) -> tuple:
        """Interleaved ``t1, r1, t2, ..., tl``; used as the cache key."""
        out = [self.node_types[0]]
        for r, t in zip(self.relations, self.node_types[1:]):
            out += [r, t]
        return tuple(out)

    @classmethod
    def from_encoding(cls, enc: Sequence[int]) -> "MetaPath":
        return cls(tuple(enc[0::2]), tuple(enc[1::2]))

    def prefix(self, n_types: int) -> "MetaPath":
        return MetaPath(self.node_types[:n_types], self.relations[: n_types - 1])

    def edges(self):
        return zip(self.node_types[:-1], self.relations, self.node_types[1:])

    def is_valid_for(self, schema: SchemaGraph) -> bool:
        return all(schema.has_edge(a, r, b) for a, r, b in self.edges())

    def format(self, g: InstanceGraph) -> str:
        parts = [g.type_names[self.node_types[0]]]
        for r, t in zip(self.relations, self.node_types[1:]):
            parts.append(f"-{g.relation_names[r]}-> {g.type_names[t]}")
        return " ".join(parts)

    @classmethod
    def parse(cls, text: str, g: InstanceGraph) -> "MetaPath":
        pieces = re.split(r"\s+-(.+?)->\s+", text.strip())
        if len(pieces) < 3 or len(pieces) % 2 == 0:
            raise ParseError(f"not a meta-path: {text!r}")
        types = [g.type_id(p) for p in pieces[0::2]]
        rels = [g.relation_id(p) for p in pieces[1::2]]
        return cls(tuple(types), tuple(rels))


@dataclass(frozen=True)
class EvalRecord:
    metapath: MetaPath
    relation: int
    coverage: float
    confidence: float
    n_connected: int
    n_both: int = 0
    # True when the relation has no instance pairs, so coverage is a guarded 0
    degenerate: bool = False


# ---------------------------------------------------------------------------
# connectivity


def _selector(g: InstanceGraph, t: int) -> sp.dia_matrix:
    key = ("sel", t)
    out = g._cache.get(key)
    if out is None:
        out = sp.diags(g.type_mask(t).astype(np.int32), format="csr")
        g._cache[key] = out
    return out


def _binarize(m: sp.csr_matrix) -> sp.csr_matrix:
    m = m.tocsr()
    m.eliminate_zeros()
    m.data[:] = 1
    return m


def _reach_cache(g: InstanceGraph) -> OrderedDict:
    cache = g._cache.get("reach")
    if cache is None:
        cache = g._cache["reach"] = OrderedDict()
    return cache


def reach_matrix(g: InstanceGraph, m: MetaPath) -> sp.csr_matrix:
    """Binary |V|x|V| matrix whose nonzeros are the M-connected pairs."""
    cache = _reach_cache(g)
    key = m.encoding
    hit = cache.get(key)
    if hit is not None:
        cache.move_to_end(key)
        return hit
    if m.hops == 1:
        t1, r, t2 = m.node_types[0], m.relations[0], m.node_types[1]
        out = _selector(g, t1) @ g.adjacency(r) @ _selector(g, t2)
    else:
        prev = reach_matrix(g, m.prefix(len(m.node_types) - 1))
        # an empty prefix stays empty; skip the products
        out = prev if prev.nnz == 0 else prev @ g.adjacency(m.relations[-1]) @ _selector(g, m.tail)
    if out.nnz:
        out = _binarize(out)
    cache[key] = out
    if len(cache) > REACH_CACHE_SIZE:
        cache.popitem(last=False)
    return out


def connected_pairs(g: InstanceGraph, m: MetaPath) -> set:
    coo = reach_matrix(g, m).tocoo()
    return set(zip(coo.row.tolist(), coo.col.tolist()))


def _counts(g: InstanceGraph, m: MetaPath, r_q: int) -> tuple[int, int, int]:
    """(|M pairs|, |r_q pairs|, |both|)."""
    reach = reach_matrix(g, m)
    adj = g.adjacency(r_q)
    if reach.nnz == 0 or adj.nnz == 0:
        return reach.nnz, adj.nnz, 0
    both = reach.multiply(adj)
    both = both.tocsr() if sp.issparse(both) else sp.csr_matrix(both)
    both.eliminate_zeros()
    return reach.nnz, adj.nnz, both.nnz


def evaluate(g: InstanceGraph, m: MetaPath, r_q: int) -> EvalRecord:
    n_m, n_r, n_both = _counts(g, m, r_q)
    return EvalRecord(
        metapath=m,
        relation=r_q,
        coverage=n_both / n_r if n_r else 0.0,
        confidence=n_both / n_m if n_m else 0.0,
        n_connected=n_m,
        n_both=n_both,
        degenerate=n_r == 0,
    )


def coverage(g: InstanceGraph, m: MetaPath, r_q: int) -> float:
    return evaluate(g, m, r_q).coverage


def confidence(g: InstanceGraph, m: MetaPath, r_q: int) -> float:
    return evaluate(g, m, r_q).confidence


class EvalCache:
    """Memoised ``EvalRecord`` store keyed by (meta-path encoding, relation).

    Lookups are lock-free; insertion takes a lock. Two workers may compute
    the same key concurrently, which is harmless because records are
    deterministic.
    """

    def __init__(self):
        self._records: dict = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._records)

    def __contains__(self, key):
        return key in self._records

    def get(self, m: MetaPath, r_q: int):
        return self._records.get((m.encoding, r_q))

    def put(self, rec: EvalRecord) -> None:
        with self._lock:
            self._records[(rec.metapath.encoding, rec.relation)] = rec

    def records(self):
        return list(self._records.values())


def evaluate_cached(cache: EvalCache, g: InstanceGraph, m: MetaPath, r_q: int) -> EvalRecord:
    rec = cache.get(m, r_q)
    if rec is not None:
        cache.hits += 1
        return rec
    cache.misses += 1
    rec = evaluate(g, m, r_q)
    cache.put(rec)
    return rec


# ---------------------------------------------------------------------------
# rewards


def arrival_indicator(trajectory, q: Query) -> int:
    """1 iff the walk ends on the target type after at least one real move.

    ``trajectory`` is a sequence whose items start with ``(state, action)``;
    actions expose ``is_stay`` and ``dst_type``.
    """
    moved = False
    current = q.src_type
    for item in trajectory:
        action = item[1]
        if not action.is_stay:
            moved = True
        current = action.dst_type
    return int(moved and current == q.tgt_type)


def reward(rec: EvalRecord | None, arrived: int, lambda1: float = 1.0, lambda2: float = 1.0) -> float:
    if lambda1 < 0 or lambda2 < 0:
        raise ValidationError("reward weights must be non-negative")
    cov = rec.coverage if rec is not None else 0.0
    conf = rec.confidence if rec is not None else 0.0
    return (lambda1 * cov + lambda2 * conf + arrived) / (lambda1 + lambda2 + 1.0)


def valid_rate(ms: Iterable[MetaPath], g: InstanceGraph) -> float:
    distinct = {m.encoding: m for m in ms}
    if not distinct:
        raise ValidationError("valid_rate of an empty meta-path set")
    valid = sum(1 for m in distinct.values() if reach_matrix(g, m).nnz > 0)
    return valid / len(distinct)


# ---------------------------------------------------------------------------
# scored TSV: relation<TAB>metapath<TAB>coverage<TAB>confidence


def write_scored_tsv(path, rows: Iterable[tuple[int, MetaPath, float, float]], g: InstanceGraph) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r, m, cov, conf in rows:
            f.write(f"{g.relation_names[r]}\t{m.format(g)}\t{cov!r}\t{conf!r}\n")


def read_scored_tsv(path, g: InstanceGraph) -> list[tuple[int, MetaPath, float, float]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ParseError("expected 4 fields", line=lineno, source=str(path))
            try:
                out.append((g.relation_id(fields[0]), MetaPath.parse(fields[1], g),
                            float(fields[2]), float(fields[3])))
            except (ValidationError, ValueError) as exc:
                raise ParseError(str(exc), line=lineno, source=str(path)) from None
    return out
