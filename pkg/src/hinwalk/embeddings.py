"""Fixed schema-level representations.

Entity and relation vectors come from a translation model (h + r ~ t)
trained on the instance graph; a type vector is the mean of its members'
entity vectors. ``random_init`` is the untrained alternative. Two extra
vectors, START and STAY, stand in for the missing previous relation at the
first step and for the stay action.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ValidationError
from .graph import InstanceGraph

MAGIC = b"HWEMB\x00\x01\x00"
_HEADER = struct.Struct("<8sIIIII")


@dataclass
class EmbeddingTable:
    entity_vecs: np.ndarray
    relation_vecs: np.ndarray
    type_vecs: np.ndarray | None
    start_vec: np.ndarray
    stay_vec: np.ndarray
    entity_names: tuple = ()
    relation_names: tuple = ()
    type_names: tuple = ()
    history: dict = field(default_factory=dict, repr=False)

    @property
    def d_e(self) -> int:
        return int(self.relation_vecs.shape[1])

    def relation_matrix(self) -> np.ndarray:
        """Relation rows followed by the STAY and START rows."""
        return np.vstack([self.relation_vecs, self.stay_vec[None], self.start_vec[None]])

    def check_finite(self) -> None:
        for name in ("entity_vecs", "relation_vecs", "type_vecs", "start_vec", "stay_vec"):
            arr = getattr(self, name)
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite values in {name}")

    def aligned_to(self, g: InstanceGraph) -> "EmbeddingTable":
        """Reorder rows to ``g``'s vocabulary by name.

        Relations and types must all be known; entity rows missing from this
        table are zero-filled (only relation and type rows feed the policy).
        """
        if (tuple(g.relation_names) == tuple(self.relation_names)
                and tuple(g.type_names) == tuple(self.type_names)
                and tuple(g.entity_names) == tuple(self.entity_names)):
            return self
        if self.type_vecs is None:
            raise ValidationError("embedding table has no type vectors")
        r_idx = {n: i for i, n in enumerate(self.relation_names)}
        t_idx = {n: i for i, n in enumerate(self.type_names)}
        e_idx = {n: i for i, n in enumerate(self.entity_names)}
        try:
            rel = self.relation_vecs[[r_idx[n] for n in g.relation_names]]
            typ = self.type_vecs[[t_idx[n] for n in g.type_names]]
        except KeyError as exc:
            raise ValidationError(f"embedding table lacks {exc.args[0]!r}") from None
        ent = np.zeros((g.n_entities, self.d_e))
        for i, n in enumerate(g.entity_names):
            j = e_idx.get(n)
            if j is not None:
                ent[i] = self.entity_vecs[j]
        return replace(self, entity_vecs=ent, relation_vecs=rel, type_vecs=typ,
                       entity_names=tuple(g.entity_names),
                       relation_names=tuple(g.relation_names),
                       type_names=tuple(g.type_names))


def _bound(d_e: int) -> float:
    return 6.0 / np.sqrt(d_e)


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=1, keepdims=True)
    n[n == 0] = 1.0
    return x / n


def _special_vectors(d_e: int, seed: int):
    """START and STAY rows, unit length like the translation relations."""
    rng = np.random.default_rng([seed, 0x57A7])
    b = _bound(d_e)
    v = _normalize_rows(rng.uniform(-b, b, (2, d_e)))
    return v[0], v[1]


def transe_distance(table: EmbeddingTable, triples) -> np.ndarray:
    """L2 distance ||h + r - t|| for each (h, r, t)."""
    tr = np.asarray(list(triples), dtype=np.int64).reshape(-1, 3)
    diff = table.entity_vecs[tr[:, 0]] + table.relation_vecs[tr[:, 1]] - table.entity_vecs[tr[:, 2]]
    return np.linalg.norm(diff, axis=1)


def margin_loss(table: EmbeddingTable, pos, neg, margin: float = 1.0) -> np.ndarray:
    return np.maximum(0.0, margin + transe_distance(table, pos) - transe_distance(table, neg))


def _clip_rows(g: np.ndarray, max_norm: float = 1.0) -> np.ndarray:
    n = np.linalg.norm(g, axis=1, keepdims=True)
    scale = np.minimum(1.0, max_norm / np.maximum(n, 1e-12))
    return g * scale


def train_translation_embeddings(g: InstanceGraph, d_e: int = 64, epochs: int = 200,
                                 margin: float = 1.0, lr: float = 0.01, neg_per_pos: int = 1,
                                 seed: int = 0, batch_size: int = 256,
                                 init: EmbeddingTable | None = None) -> EmbeddingTable:
    """Margin-ranking translation embeddings with uniform head/tail corruption.

    Entity rows are renormalised to unit length after every update and the
    per-row gradient is clipped to norm 1. ``history`` on the returned table
    holds per-epoch mean loss and mean positive distance.
    """
    if d_e <= 0 or epochs <= 0 or neg_per_pos <= 0:
        raise ConfigError("d_e, epochs and neg_per_pos must be positive")
    if not g.triples:
        raise DataError("cannot train embeddings on a graph without triples")
    rng = np.random.default_rng(seed)
    b = _bound(d_e)
    if init is None:
        ent = _normalize_rows(rng.uniform(-b, b, (g.n_entities, d_e)))
        rel = _normalize_rows(rng.uniform(-b, b, (g.n_relations, d_e)))
    else:
        ent, rel = init.entity_vecs.copy(), init.relation_vecs.copy()
    triples = np.array(sorted(g.triples), dtype=np.int64)
    pool = np.array(sorted(g.entities), dtype=np.int64)
    n = len(triples)
    losses, dists = [], []
    for _ in range(epochs):
        order = rng.permutation(n)
        ep_loss = 0.0
        ep_dist = 0.0
        for start in range(0, n, batch_size):
            pos = np.repeat(triples[order[start:start + batch_size]], neg_per_pos, axis=0)
            neg = pos.copy()
            corrupt_head = rng.random(len(pos)) < 0.5
            repl = pool[rng.integers(0, len(pool), len(pos))]
            neg[corrupt_head, 0] = repl[corrupt_head]
            neg[~corrupt_head, 2] = repl[~corrupt_head]

            dp = ent[pos[:, 0]] + rel[pos[:, 1]] - ent[pos[:, 2]]
            dn = ent[neg[:, 0]] + rel[neg[:, 1]] - ent[neg[:, 2]]
            np_ = np.linalg.norm(dp, axis=1)
            nn_ = np.linalg.norm(dn, axis=1)
            loss = np.maximum(0.0, margin + np_ - nn_)
            ep_loss += float(loss.sum())
            ep_dist += float(np_.sum())
            act = loss > 0
            if not act.any():
                continue
            up = dp[act] / np.maximum(np_[act], 1e-12)[:, None]
            un = dn[act] / np.maximum(nn_[act], 1e-12)[:, None]
            ge = np.zeros_like(ent)
            gr = np.zeros_like(rel)
            p, q = pos[act], neg[act]
            np.add.at(ge, p[:, 0], up)
            np.add.at(ge, p[:, 2], -up)
            np.add.at(gr, p[:, 1], up - un)
            np.add.at(ge, q[:, 0], -un)
            np.add.at(ge, q[:, 2], un)
            touched_e = np.unique(np.concatenate([p[:, 0], p[:, 2], q[:, 0], q[:, 2]]))
            touched_r = np.unique(p[:, 1])
            ent[touched_e] -= lr * _clip_rows(ge[touched_e])
            rel[touched_r] -= lr * _clip_rows(gr[touched_r])
            ent[touched_e] = _normalize_rows(ent[touched_e])
        losses.append(ep_loss / (n * neg_per_pos))
        dists.append(ep_dist / (n * neg_per_pos))
    start_vec, stay_vec = _special_vectors(d_e, seed)
    table = EmbeddingTable(
        entity_vecs=ent, relation_vecs=rel, type_vecs=None,
        start_vec=start_vec, stay_vec=stay_vec,
        entity_names=tuple(g.entity_names), relation_names=tuple(g.relation_names),
        type_names=tuple(g.type_names),
        history={"loss": losses, "pos_distance": dists},
    )
    table.check_finite()
    return table


def pool_type_embeddings(tab: EmbeddingTable, g: InstanceGraph) -> EmbeddingTable:
    """Type vector = mean of member entity vectors."""
    out = np.zeros((g.n_types, tab.d_e))
    for t in range(g.n_types):
        members = g.members(t)
        if len(members) == 0:
            raise ValidationError(f"type {g.type_names[t]!r} has no member entities")
        out[t] = tab.entity_vecs[members].mean(axis=0)
    return replace(tab, type_vecs=out, type_names=tuple(g.type_names))


def random_init(n_types: int, n_relations: int, d_e: int = 64, seed: int = 0,
                n_entities: int = 0, g: InstanceGraph | None = None) -> EmbeddingTable:
    """i.i.d. uniform in [-6/sqrt(d_e), 6/sqrt(d_e)]."""
    if d_e <= 0:
        raise ConfigError("d_e must be positive")
    rng = np.random.default_rng(seed)
    b = _bound(d_e)
    typ = rng.uniform(-b, b, (n_types, d_e))
    rel = rng.uniform(-b, b, (n_relations, d_e))
    ent = rng.uniform(-b, b, (n_entities, d_e))
    start_vec, stay_vec = rng.uniform(-b, b, d_e), rng.uniform(-b, b, d_e)
    names = {}
    if g is not None:
        names = dict(entity_names=tuple(g.entity_names), relation_names=tuple(g.relation_names),
                     type_names=tuple(g.type_names))
    return EmbeddingTable(entity_vecs=ent, relation_vecs=rel, type_vecs=typ,
                          start_vec=start_vec, stay_vec=stay_vec, **names)


def build_embeddings(g: InstanceGraph, method: str = "transe", d_e: int = 64, seed: int = 0,
                     **transe_kw) -> EmbeddingTable:
    if method == "transe":
        tab = train_translation_embeddings(g, d_e=d_e, seed=seed, **transe_kw)
        return pool_type_embeddings(tab, g)
    if method == "random":
        return random_init(g.n_types, g.n_relations, d_e, seed, n_entities=g.n_entities, g=g)
    raise ConfigError(f"unknown embedding method {method!r}")


# ---------------------------------------------------------------------------
# binary file + sidecar index


def save_embeddings(path, tab: EmbeddingTable) -> Path:
    """Write ``path`` and ``path.index.tsv``; returns the sidecar path."""
    path = Path(path)
    typ = tab.type_vecs if tab.type_vecs is not None else np.zeros((0, tab.d_e))
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, tab.d_e, len(tab.entity_vecs), len(tab.relation_vecs),
                             len(typ), 2))
        for block in (tab.entity_vecs, tab.relation_vecs, typ,
                      tab.start_vec[None], tab.stay_vec[None]):
            f.write(np.ascontiguousarray(block, dtype="<f4").tobytes())
    side = path.with_name(path.name + ".index.tsv")
    with open(side, "w", encoding="utf-8") as f:
        for kind, names in (("entity", tab.entity_names), ("relation", tab.relation_names),
                            ("type", tab.type_names)):
            for i, n in enumerate(names):
                f.write(f"{kind}\t{n}\t{i}\n")
    return side


def load_embeddings(path) -> EmbeddingTable:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated embedding file")
    magic, d_e, n_e, n_r, n_t, n_special = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic, not an embedding file")
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    expected = (n_e + n_r + n_t + n_special) * d_e
    if body.size != expected:
        raise DataError(f"{path}: expected {expected} floats, found {body.size}")
    body = body.reshape(-1, d_e)
    ent, rel, typ = body[:n_e], body[n_e:n_e + n_r], body[n_e + n_r:n_e + n_r + n_t]
    start_vec, stay_vec = body[-2], body[-1]
    names = {"entity": {}, "relation": {}, "type": {}}
    side = path.with_name(path.name + ".index.tsv")
    if side.exists():
        with open(side, encoding="utf-8") as f:
            for line in f:
                kind, name, row = line.rstrip("\n").split("\t")
                names[kind][int(row)] = name
    def seq(kind, n):
        d = names[kind]
        return tuple(d[i] for i in range(n)) if len(d) == n else ()
    return EmbeddingTable(entity_vecs=ent.copy(), relation_vecs=rel.copy(),
                          type_vecs=typ.copy() if n_t else None,
                          start_vec=start_vec.copy(), stay_vec=stay_vec.copy(),
                          entity_names=seq("entity", n_e), relation_names=seq("relation", n_r),
                          type_names=seq("type", n_t))
