"""Beam-search meta-path mining and tail-entity ranking."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env import SchemaEnv, State, Trajectory, trajectory_to_metapath
from .errors import ValidationError
from .graph import InstanceGraph, Query, SchemaGraph, queries_for_relation
from .metapath import MetaPath, evaluate, read_scored_tsv, write_scored_tsv
from .policy import PolicyParams, _embedding_mats, decoder_output, lstm_cell, masked_log_softmax, zero_hidden


@dataclass
class MinedPathSet:
    relation: int
    entries: list = field(default_factory=list)  # (MetaPath, coverage, confidence)

    def __post_init__(self):
        seen = set()
        for m, _, _ in self.entries:
            if m.encoding in seen:
                raise ValidationError(f"duplicate meta-path {m.encoding} in mined set")
            seen.add(m.encoding)

    def __len__(self):
        return len(self.entries)

    @property
    def metapaths(self) -> list[MetaPath]:
        return [m for m, _, _ in self.entries]

    def confidences(self) -> np.ndarray:
        return np.array([c for _, _, c in self.entries], dtype=float)

    def sorted(self) -> "MinedPathSet":
        es = sorted(self.entries, key=lambda e: (-e[2], -e[1], e[0].encoding))
        return MinedPathSet(self.relation, es)


@dataclass
class QARanking:
    head: int
    relation: int
    gold: int | None
    scores: dict
    rank: float

    @property
    def reciprocal(self) -> float:
        return 0.0 if math.isinf(self.rank) else 1.0 / self.rank


# ---------------------------------------------------------------------------
# beam search


def beam_search(params: PolicyParams, env: SchemaEnv, q: Query, width: int) -> list[tuple[Trajectory, float]]:
    """Keep the ``width`` best partial episodes by cumulative log-prob.

    Ties are broken by the lexicographic sequence of candidate indices
    (candidates are ordered by (relation, dst) with STAY last), so results
    are deterministic.
    """
    if width < 1:
        raise ValidationError("beam width must be >= 1")
    relM, typM = _embedding_mats(params, env)
    rel_tab, dst_tab, valid_tab = env.candidate_table()
    d_h = params.d_h
    rq_vec, tgt_vec = relM[q.relation], typM[q.tgt_type]

    seqs = [()]
    score = np.zeros(1)
    cur = np.array([q.src_type])
    prev = np.array([env.start_index])
    moved = np.zeros(1, dtype=bool)
    (h0, c0), (h1, c1) = zero_hidden(d_h, 1)
    step_lps = [()]
    for _ in range(env.max_hops):
        n = len(seqs)
        x = np.concatenate([relM[prev], typM[cur]], axis=1)
        h0, c0, _ = lstm_cell(params["lstm0_W"], params["lstm0_b"], x, h0, c0)
        h1, c1, _ = lstm_cell(params["lstm1_W"], params["lstm1_b"], h0, h1, c1)
        enc = np.concatenate([h1, typM[cur], np.tile(rq_vec, (n, 1)),
                              np.tile(tgt_vec - rq_vec, (n, 1))], axis=1)
        out, _, _ = decoder_output(params, enc)
        c_rel, c_dst = rel_tab[cur], dst_tab[cur]
        valid = valid_tab[cur].copy()
        if env.mask_direct:
            valid &= ~((~moved)[:, None] & (c_rel == q.relation) & (c_dst == q.tgt_type))
        D = np.concatenate([relM[c_rel], typM[c_dst]], axis=2)
        logp = masked_log_softmax(np.einsum("bad,bd->ba", D, out), valid)
        total = score[:, None] + logp
        cand = [(-total[b, a], seqs[b] + (a,), b, a)
                for b, a in zip(*np.nonzero(valid))]
        cand.sort(key=lambda c: (c[0], c[1]))
        cand = cand[:width]
        keep = np.array([c[2] for c in cand])
        act = np.array([c[3] for c in cand])
        seqs = [c[1] for c in cand]
        step_lps = [step_lps[b] + (float(logp[b, a]),) for _, _, b, a in cand]
        score = total[keep, act]
        new_rel, new_dst = c_rel[keep, act], c_dst[keep, act]
        moved = moved[keep] | (new_rel != env.stay_index)
        prev, cur = new_rel, new_dst
        h0, c0, h1, c1 = h0[keep], c0[keep], h1[keep], c1[keep]

    out = []
    for b, seq in enumerate(seqs):
        out.append((_sequence_to_trajectory(env, q, seq, step_lps[b]), float(score[b])))
    return out


def _sequence_to_trajectory(env: SchemaEnv, q: Query, seq, lps) -> Trajectory:
    rel_tab, dst_tab, _ = env.candidate_table()
    s = env.reset(q)
    steps = []
    for a_idx, lp in zip(seq, lps):
        a = env.action_from_table(rel_tab[s.current_type, a_idx], dst_tab[s.current_type, a_idx])
        steps.append((s, a, lp))
        s = State(a.dst_type, q, s.step + 1, s.moved or not a.is_stay)
    return Trajectory(q, steps, int(s.moved and s.current_type == q.tgt_type))


def beam_metapaths(params: PolicyParams, env: SchemaEnv, q: Query, width: int) -> list[MetaPath]:
    """Distinct arriving meta-paths in beam order (best log-prob first)."""
    out, seen = [], set()
    for tr, _ in beam_search(params, env, q, width):
        if not tr.arrived:
            continue
        m = trajectory_to_metapath(tr)
        if m.encoding not in seen:
            seen.add(m.encoding)
            out.append(m)
    return out


def mine_metapaths(params: PolicyParams, env: SchemaEnv, g: InstanceGraph, schema: SchemaGraph,
                   r_q: int, width: int = 400, threshold: float | None = None,
                   queries=None) -> MinedPathSet:
    """Beam-search every type-pair query of ``r_q`` and score what arrives.

    ``g`` is the graph coverage and confidence are measured on.
    """
    if queries is None:
        queries = [Query(p.src, r_q, p.dst) for p in queries_for_relation(g, schema, r_q, threshold)]
    found: dict = {}
    for q in queries:
        for m in beam_metapaths(params, env, q, width):
            found.setdefault(m.encoding, m)
    entries = []
    for m in found.values():
        rec = evaluate(g, m, r_q)
        entries.append((m, rec.coverage, rec.confidence))
    return MinedPathSet(r_q, entries).sorted()


# ---------------------------------------------------------------------------
# query answering


def reachable_from(g: InstanceGraph, e: int, m: MetaPath) -> np.ndarray:
    """Entities reachable from ``e`` along an instance of ``m``."""
    mask = g.type_mask(m.head)
    if not mask[e]:
        return np.zeros(0, dtype=np.int64)
    v = np.zeros(g.n_entities, dtype=bool)
    v[e] = True
    for r, t in zip(m.relations, m.node_types[1:]):
        adj = g.adjacency(r)
        idx = np.nonzero(v)[0]
        nxt = np.zeros(g.n_entities, dtype=bool)
        if len(idx):
            sub = adj[idx]
            nxt[sub.indices] = True
        v = nxt & g.type_mask(t)
        if not v.any():
            break
    return np.nonzero(v)[0]


def answer_query(e_h: int, r_q: int, mined: MinedPathSet, g: InstanceGraph, gold: int | None = None) -> QARanking:
    if not 0 <= e_h < g.n_entities or e_h not in g.entities:
        raise ValidationError(f"unknown entity id {e_h}")
    head_types = g.types_of(e_h)
    scores: dict = {}
    for m, _, conf in mined.entries:
        if m.head not in head_types:
            continue
        for t in reachable_from(g, e_h, m).tolist():
            if conf > scores.get(t, -1.0):
                scores[t] = conf
    rank = math.inf
    if gold is not None and gold in scores:
        s = scores[gold]
        rank = 1 + sum(1 for v in scores.values() if v > s)
    return QARanking(e_h, r_q, gold, scores, rank)


def qa_metrics(ranks) -> dict:
    ranks = np.asarray(list(ranks), dtype=float)
    if len(ranks) == 0:
        raise ValidationError("no ranks to summarise")
    rr = np.where(np.isinf(ranks), 0.0, 1.0 / ranks)
    return {
        "hits1": float(np.mean(ranks <= 1)),
        "hits3": float(np.mean(ranks <= 3)),
        "hits10": float(np.mean(ranks <= 10)),
        "mrr": float(rr.mean()),
        "n": int(len(ranks)),
    }


def evaluate_qa(test_triples, mined_by_relation: dict, g: InstanceGraph):
    """Raw-protocol ranking of every (h, r, t); returns (metrics, rankings)."""
    rankings = []
    for h, r, t in test_triples:
        if r not in mined_by_relation:
            raise ValidationError(f"no mined meta-paths for relation {r}")
        rankings.append(answer_query(h, r, mined_by_relation[r], g, gold=t))
    return qa_metrics(q.rank for q in rankings), rankings


def save_mined(path, mined_sets, g: InstanceGraph) -> None:
    rows = [(ms.relation, m, cov, conf) for ms in mined_sets for m, cov, conf in ms.entries]
    write_scored_tsv(path, rows, g)


def load_mined(path, g: InstanceGraph) -> dict:
    by_rel: dict = {}
    for r, m, cov, conf in read_scored_tsv(path, g):
        by_rel.setdefault(r, []).append((m, cov, conf))
    return {r: MinedPathSet(r, es) for r, es in by_rel.items()}
