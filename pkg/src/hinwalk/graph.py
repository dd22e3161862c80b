"""Two-view HIN data model: the instance graph, the derived schema graph,
loaders, and graph surgery.

Entities, types and relations are dense integer ids assigned in
first-appearance order; names live in the ``*_names`` tuples. Graphs are
treated as immutable and every surgery returns a new object.
"""
from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Iterator, Mapping, TextIO

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ParseError, ValidationError

log = logging.getLogger(__name__)

INVERSE_SUFFIX = "⁻¹"

Triple = tuple[int, int, int]


@dataclass(frozen=True)
class Query:
    src_type: int
    relation: int
    tgt_type: int


@dataclass(frozen=True)
class TypePairSupport:
    pair: tuple[int, int]
    count: int

    @property
    def src(self) -> int:
        return self.pair[0]

    @property
    def dst(self) -> int:
        return self.pair[1]


@dataclass(frozen=True, eq=False)
class InstanceGraph:
    entity_names: tuple[str, ...]
    type_names: tuple[str, ...]
    relation_names: tuple[str, ...]
    triples: frozenset
    type_map: Mapping[int, frozenset]
    entities: frozenset
    # inverse[r] is the id of inv(r); None until add_inverse_relations has run
    inverse: tuple[int, ...] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- vocabulary helpers -------------------------------------------------
    @property
    def n_entities(self) -> int:
        """Matrix dimension; removed entities keep their row."""
        return len(self.entity_names)

    @property
    def n_types(self) -> int:
        return len(self.type_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    @property
    def relation_vocab(self) -> dict[int, str]:
        return dict(enumerate(self.relation_names))

    @property
    def type_vocab(self) -> dict[int, str]:
        return dict(enumerate(self.type_names))

    @property
    def augmented(self) -> bool:
        return self.inverse is not None

    def _index(self, key, names):
        idx = self._cache.get(key)
        if idx is None:
            idx = {n: i for i, n in enumerate(names)}
            self._cache[key] = idx
        return idx

    def entity_id(self, name: str) -> int:
        try:
            return self._index("eidx", self.entity_names)[name]
        except KeyError:
            raise ValidationError(f"unknown entity {name!r}") from None

    def type_id(self, name: str) -> int:
        try:
            return self._index("tidx", self.type_names)[name]
        except KeyError:
            raise ValidationError(f"unknown entity type {name!r}") from None

    def relation_id(self, name: str) -> int:
        try:
            return self._index("ridx", self.relation_names)[name]
        except KeyError:
            raise ValidationError(f"unknown relation {name!r}") from None

    def inverse_of(self, r: int) -> int:
        if self.inverse is None:
            raise ValidationError("graph has no inverse relations")
        return self.inverse[r]

    def is_inverse(self, r: int) -> bool:
        """True for the relations introduced by inverse augmentation."""
        return self.inverse is not None and r >= self.n_relations // 2

    # -- derived structures (memoised) --------------------------------------
    def types_of(self, e: int) -> frozenset:
        return self.type_map.get(e, frozenset())

    def members(self, t: int) -> np.ndarray:
        key = ("members", t)
        out = self._cache.get(key)
        if out is None:
            out = np.array(sorted(e for e, ts in self.type_map.items() if t in ts), dtype=np.int64)
            self._cache[key] = out
        return out

    def type_mask(self, t: int) -> np.ndarray:
        key = ("mask", t)
        out = self._cache.get(key)
        if out is None:
            out = np.zeros(self.n_entities, dtype=bool)
            out[self.members(t)] = True
            self._cache[key] = out
        return out

    def pairs(self, r: int) -> frozenset:
        by_rel = self._cache.get("by_rel")
        if by_rel is None:
            by_rel = {}
            for h, rel, t in self.triples:
                by_rel.setdefault(rel, set()).add((h, t))
            by_rel = {k: frozenset(v) for k, v in by_rel.items()}
            self._cache["by_rel"] = by_rel
        return by_rel.get(r, frozenset())

    def adjacency(self, r: int) -> sp.csr_matrix:
        """Binary |V|x|V| CSR matrix of relation ``r``."""
        key = ("adj", r)
        out = self._cache.get(key)
        if out is None:
            prs = self.pairs(r)
            n = self.n_entities
            if prs:
                rows, cols = zip(*prs)
                data = np.ones(len(prs), dtype=np.int32)
                out = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
            else:
                out = sp.csr_matrix((n, n), dtype=np.int32)
            out.sort_indices()
            self._cache[key] = out
        return out

    def out_edges(self) -> dict[int, list[tuple[int, int]]]:
        """entity -> sorted [(relation, neighbour)], for BFS-style walks."""
        out = self._cache.get("out_edges")
        if out is None:
            out = {}
            for h, r, t in self.triples:
                out.setdefault(h, []).append((r, t))
            for v in out.values():
                v.sort()
            self._cache["out_edges"] = out
        return out

    def validate(self) -> None:
        for h, r, t in self.triples:
            for e in (h, t):
                if not self.type_map.get(e):
                    raise ValidationError(f"entity {self.entity_names[e]!r} has no type")
            if not 0 <= r < self.n_relations:
                raise ValidationError(f"relation id {r} not in vocabulary")
        if self.inverse is not None:
            for h, r, t in self.triples:
                if (t, self.inverse[r], h) not in self.triples:
                    raise ValidationError("inverse closure violated")


@dataclass(frozen=True, eq=False)
class SchemaGraph:
    types: frozenset
    edges: frozenset
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def out_edges(self, t: int) -> list[tuple[int, int]]:
        """Outgoing (relation, dst type) pairs of type ``t`` in (relation, dst) order."""
        table = self._cache.get("out")
        if table is None:
            table = {}
            for src, r, dst in self.edges:
                table.setdefault(src, []).append((r, dst))
            for v in table.values():
                v.sort()
            self._cache["out"] = table
        return table.get(t, [])

    def has_edge(self, src: int, r: int, dst: int) -> bool:
        return (src, r, dst) in self.edges

    def __len__(self) -> int:
        return len(self.edges)


# ---------------------------------------------------------------------------
# loading


def _open_text(source) -> tuple[TextIO, str, bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding="utf-8"), str(source), True
    return source, getattr(source, "name", "<stream>"), False


def _rows(source, n_fields: int) -> Iterator[tuple[int, list[str]]]:
    stream, name, owned = _open_text(source)
    try:
        for lineno, raw in enumerate(stream, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = [f.strip() for f in line.split("\t")]
            if len(fields) != n_fields or not all(fields):
                raise ParseError(
                    f"expected {n_fields} tab-separated fields, got {len(fields)}",
                    line=lineno,
                    source=name,
                )
            yield lineno, fields
    finally:
        if owned:
            stream.close()


def load_instance_graph(triples_source, types_source, relations_source=None) -> InstanceGraph:
    """Read ``triples.tsv`` (head, relation, tail) and ``types.tsv`` (entity, type).

    ``relations_source`` optionally declares relation names up front (one per
    line); this lets a relation exist in the vocabulary without instances.
    """
    ent_idx: dict[str, int] = {}
    rel_idx: dict[str, int] = {}
    type_idx: dict[str, int] = {}

    def intern(table, key):
        i = table.get(key)
        if i is None:
            i = table[key] = len(table)
        return i

    if relations_source is not None:
        for _, (name,) in _rows(relations_source, 1):
            intern(rel_idx, name)

    raw_triples = []
    for _, (h, r, t) in _rows(triples_source, 3):
        raw_triples.append((intern(ent_idx, h), intern(rel_idx, r), intern(ent_idx, t)))

    type_map: dict[int, set] = {}
    for _, (e, ty) in _rows(types_source, 2):
        type_map.setdefault(intern(ent_idx, e), set()).add(intern(type_idx, ty))

    names = [None] * len(ent_idx)
    for k, v in ent_idx.items():
        names[v] = k
    for h, _, t in raw_triples:
        for e in (h, t):
            if e not in type_map:
                raise ValidationError(f"entity {names[e]!r} appears in a triple but has no type")

    return InstanceGraph(
        entity_names=tuple(names),
        type_names=tuple(sorted(type_idx, key=type_idx.get)),
        relation_names=tuple(sorted(rel_idx, key=rel_idx.get)),
        triples=frozenset(raw_triples),
        type_map={e: frozenset(ts) for e, ts in type_map.items()},
        entities=frozenset(range(len(names))),
    )


def from_named(triples: Iterable[tuple[str, str, str]], types: Mapping[str, Iterable[str]],
               relations: Iterable[str] = ()) -> InstanceGraph:
    """Build a graph from in-memory name tuples (same semantics as the loader)."""
    tbuf = io.StringIO("".join(f"{h}\t{r}\t{t}\n" for h, r, t in triples))
    ybuf = io.StringIO("".join(f"{e}\t{ty}\n" for e, tys in types.items() for ty in tys))
    rels = list(relations)
    rbuf = io.StringIO("".join(f"{r}\n" for r in rels)) if rels else None
    return load_instance_graph(tbuf, ybuf, rbuf)


def write_instance_graph(g: InstanceGraph, triples_path, types_path, relations_path=None) -> None:
    """Inverse triples are not written; augmentation is re-applied after loading."""
    base = g.n_relations // 2 if g.augmented else g.n_relations
    with open(triples_path, "w", encoding="utf-8") as f:
        for h, r, t in sorted(g.triples):
            if r < base:
                f.write(f"{g.entity_names[h]}\t{g.relation_names[r]}\t{g.entity_names[t]}\n")
    with open(types_path, "w", encoding="utf-8") as f:
        for e in sorted(g.type_map):
            for ty in sorted(g.type_map[e]):
                f.write(f"{g.entity_names[e]}\t{g.type_names[ty]}\n")
    if relations_path is not None:
        with open(relations_path, "w", encoding="utf-8") as f:
            for name in g.relation_names[:base]:
                f.write(name + "\n")


def load_toy() -> InstanceGraph:
    """The shipped nine-entity fixture (scientists, universities, cities, countries)."""
    root = resources.files("hinwalk") / "data"
    with (root / "toy_triples.tsv").open(encoding="utf-8") as tf, \
            (root / "toy_types.tsv").open(encoding="utf-8") as yf, \
            (root / "toy_relations.txt").open(encoding="utf-8") as rf:
        return load_instance_graph(tf, yf, rf)


# ---------------------------------------------------------------------------
# schema


def derive_schema_graph(g: InstanceGraph) -> SchemaGraph:
    edges = set()
    for h, r, t in g.triples:
        for th in g.types_of(h):
            for tt in g.types_of(t):
                edges.add((th, r, tt))
    return SchemaGraph(types=frozenset(range(g.n_types)), edges=frozenset(edges))


def load_schema_graph(source, g: InstanceGraph) -> SchemaGraph:
    """Override file with ``src_type<TAB>relation<TAB>dst_type`` rows."""
    edges = set()
    for lineno, (a, r, b) in _rows(source, 3):
        try:
            edges.add((g.type_id(a), g.relation_id(r), g.type_id(b)))
        except ValidationError as exc:
            raise ParseError(str(exc), line=lineno) from None
    return SchemaGraph(types=frozenset(range(g.n_types)), edges=frozenset(edges))


# ---------------------------------------------------------------------------
# surgery


def add_inverse_relations(g: InstanceGraph, s: SchemaGraph) -> tuple[InstanceGraph, SchemaGraph]:
    if g.augmented:
        raise ValidationError("graph already carries inverse relations")
    n = g.n_relations
    names = g.relation_names + tuple(name + INVERSE_SUFFIX for name in g.relation_names)
    inverse = tuple(list(range(n, 2 * n)) + list(range(n)))
    triples = set(g.triples)
    triples.update((t, r + n, h) for h, r, t in g.triples)
    edges = set(s.edges)
    edges.update((b, r + n, a) for a, r, b in s.edges)
    g2 = InstanceGraph(
        entity_names=g.entity_names,
        type_names=g.type_names,
        relation_names=names,
        triples=frozenset(triples),
        type_map=g.type_map,
        entities=g.entities,
        inverse=inverse,
    )
    return g2, SchemaGraph(types=s.types, edges=frozenset(edges))


def _replace(g: InstanceGraph, **kw) -> InstanceGraph:
    fields_ = dict(
        entity_names=g.entity_names,
        type_names=g.type_names,
        relation_names=g.relation_names,
        triples=g.triples,
        type_map=g.type_map,
        entities=g.entities,
        inverse=g.inverse,
    )
    fields_.update(kw)
    return InstanceGraph(**fields_)


def remove_triples(g: InstanceGraph, facts: Iterable[Triple]) -> InstanceGraph:
    """Drop ``facts`` (and their inverses on an augmented graph)."""
    drop = set()
    missing = 0
    for h, r, t in facts:
        if (h, r, t) not in g.triples:
            missing += 1
            continue
        drop.add((h, r, t))
        if g.inverse is not None:
            drop.add((t, g.inverse[r], h))
    if missing:
        log.warning("remove_triples: %d fact(s) not in graph, ignored", missing)
    if not drop:
        return g
    return _replace(g, triples=g.triples - drop)


def remove_entities(g: InstanceGraph, nodes: Iterable[int]) -> InstanceGraph:
    nodes = frozenset(nodes)
    if not nodes:
        return g
    triples = frozenset(tr for tr in g.triples if tr[0] not in nodes and tr[2] not in nodes)
    type_map = {e: ts for e, ts in g.type_map.items() if e not in nodes}
    return _replace(g, triples=triples, type_map=type_map, entities=g.entities - nodes)


def remove_relations(g: InstanceGraph, relations: Iterable[int]) -> InstanceGraph:
    """Drop every triple of the given relations (and their inverses)."""
    rels = set(relations)
    if g.inverse is not None:
        rels |= {g.inverse[r] for r in rels}
    return _replace(g, triples=frozenset(tr for tr in g.triples if tr[1] not in rels))


# ---------------------------------------------------------------------------
# query sets


def type_pairs_for_relation(g: InstanceGraph, s: SchemaGraph, r_q: int) -> list[TypePairSupport]:
    if not 0 <= r_q < g.n_relations:
        raise ValidationError(f"relation id {r_q} not in vocabulary")
    counts: dict[tuple[int, int], int] = {}
    for src, r, dst in s.edges:
        if r == r_q:
            counts[(src, dst)] = 0
    for h, t in g.pairs(r_q):
        for th in g.types_of(h):
            for tt in g.types_of(t):
                if (th, tt) in counts:
                    counts[(th, tt)] += 1
    out = [TypePairSupport(p, c) for p, c in counts.items() if c > 0]
    out.sort(key=lambda x: (-x.count, x.pair))
    return out


def narrow_query_set(pairs: list[TypePairSupport], threshold: float) -> list[TypePairSupport]:
    """Greedy count-descending prefix covering ``threshold`` of the raw counts."""
    if not pairs:
        raise ValidationError("cannot narrow an empty query set")
    if not 0 < threshold <= 1:
        raise ConfigError(f"threshold must be in (0, 1], got {threshold}")
    ordered = sorted(pairs, key=lambda x: (-x.count, x.pair))
    total = sum(p.count for p in ordered)
    need = threshold * total
    out, acc = [], 0
    for p in ordered:
        out.append(p)
        acc += p.count
        if acc >= need - 1e-9 * total:
            break
    return out


def queries_for_relation(g: InstanceGraph, s: SchemaGraph, r_q: int,
                         threshold: float | None = None) -> list[TypePairSupport]:
    pairs = type_pairs_for_relation(g, s, r_q)
    if threshold is not None and pairs:
        pairs = narrow_query_set(pairs, threshold)
    return pairs
