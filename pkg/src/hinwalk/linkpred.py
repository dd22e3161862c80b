"""Per-relation link prediction from mined meta-paths."""
from __future__ import annotations

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError
from .graph import InstanceGraph, remove_entities, remove_triples
from .inference import MinedPathSet
from .metapath import evaluate, reach_matrix

log = logging.getLogger(__name__)


class SimilarityMode(str, enum.Enum):
    SUM_CONF = "sum_conf"
    META_COUNT = "meta_count"
    CONF_FEAT = "conf_feat"
    BINARY_FEAT = "binary_feat"

    @property
    def scalar(self) -> bool:
        return self in (SimilarityMode.SUM_CONF, SimilarityMode.META_COUNT)


@dataclass
class LPDataset:
    relation: int
    train: list = field(default_factory=list)  # (head, tail, label)
    test: list = field(default_factory=list)

    def __post_init__(self):
        lab: dict = {}
        for h, t, y in list(self.train) + list(self.test):
            if lab.setdefault((h, t), y) != y:
                raise ValidationError(f"pair {(h, t)} appears with both labels")

    def positives(self, split: str) -> list:
        return [(h, t) for h, t, y in getattr(self, split) if y == 1]

    def negatives(self, split: str) -> list:
        return [(h, t) for h, t, y in getattr(self, split) if y == 0]


# ---------------------------------------------------------------------------
# dataset preparation


def has_alternate_path(g: InstanceGraph, h: int, t: int, r_q: int, max_hops: int, adj=None) -> bool:
    """BFS from ``h`` to ``t`` within ``max_hops`` edges, ignoring the direct
    ``(h, r_q, t)`` fact and its inverse."""
    if adj is None:
        adj = g.out_edges()
    inv = g.inverse_of(r_q) if g.augmented else None
    seen = {h}
    frontier = deque([(h, 0)])
    while frontier:
        u, d = frontier.popleft()
        if d == max_hops:
            continue
        for r, v in adj.get(u, ()):
            if u == h and v == t and r == r_q:
                continue
            if u == t and v == h and inv is not None and r == inv:
                continue
            if v == t:
                return True
            if v not in seen:
                seen.add(v)
                frontier.append((v, d + 1))
    return False


def split_sizes(n: int, ratio: float) -> tuple[int, int]:
    n_test = int(math.floor(n * (1.0 - ratio) + 1e-9))
    return n - n_test, n_test


def prepare_dataset(g: InstanceGraph, r_q: int, l: int = 5, split_ratio: float = 0.8, seed: int = 0):
    """Positive train/test pairs for ``r_q`` and the graph with test facts removed.

    A pair is kept only if some instance path of at most ``l - 1`` hops
    other than the direct fact connects it.
    """
    if l < 2:
        raise ValidationError("l must be >= 2")
    if not 0 < split_ratio < 1:
        raise ValidationError("split_ratio must be in (0, 1)")
    adj = g.out_edges()
    pairs = sorted(p for p in g.pairs(r_q) if has_alternate_path(g, p[0], p[1], r_q, l - 1, adj))
    if not pairs:
        raise ValidationError(f"relation {g.relation_names[r_q]!r}: no pair has an alternate path")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    n_train, _ = split_sizes(len(pairs), split_ratio)
    train = [pairs[i] for i in order[:n_train]]
    test = [pairs[i] for i in order[n_train:]]
    surgered = remove_triples(g, [(h, r_q, t) for h, t in test])
    ds = LPDataset(r_q, [(h, t, 1) for h, t in train], [(h, t, 1) for h, t in test])
    return ds, surgered


def generate_negatives(positives, g: InstanceGraph, r_q: int, seed: int = 0, true_pairs=None,
                       max_draws: int = 100) -> list:
    """Tail-corrupted negatives, one per two positives (rounded down)."""
    positives = list(positives)
    true_pairs = set(true_pairs) if true_pairs is not None else set(g.pairs(r_q))
    true_pairs |= set(positives)
    rng = np.random.default_rng(seed)
    n_neg = len(positives) // 2
    if n_neg == 0:
        return []
    chosen = rng.choice(len(positives), size=n_neg, replace=False)
    out, made = [], set()
    for i in sorted(chosen.tolist()):
        h, t = positives[i]
        pool = set()
        for ty in g.types_of(t):
            pool.update(g.members(ty).tolist())
        pool.discard(t)
        if not pool:
            log.warning("tail %d has no same-type alternative; skipped", t)
            continue
        pool = np.array(sorted(pool))
        for _ in range(max_draws):
            c = int(pool[rng.integers(len(pool))])
            if (h, c) not in true_pairs and (h, c) not in made:
                out.append((h, c, 0))
                made.add((h, c))
                break
        else:
            log.warning("could not corrupt pair %s after %d draws; skipped", (h, t), max_draws)
    return out


def add_negatives(ds: LPDataset, g: InstanceGraph, seed: int = 0, true_pairs=None) -> LPDataset:
    """Attach negatives to each split, derived from that split's positives."""
    if true_pairs is None:
        true_pairs = set(g.pairs(ds.relation)) | set(ds.positives("test"))
    tr = generate_negatives(ds.positives("train"), g, ds.relation, seed, true_pairs)
    te = generate_negatives(ds.positives("test"), g, ds.relation, seed + 1, true_pairs)
    clash = {(h, t) for h, t, _ in tr} & {(h, t) for h, t, _ in te}
    te = [x for x in te if (x[0], x[1]) not in clash]
    return LPDataset(ds.relation, list(ds.train) + tr, list(ds.test) + te)


# ---------------------------------------------------------------------------
# features


def connection_matrix(pairs, mined: MinedPathSet, g: InstanceGraph) -> np.ndarray:
    """Boolean (n_pairs, n_metapaths): does meta-path i connect the pair."""
    pairs = list(pairs)
    out = np.zeros((len(pairs), len(mined)), dtype=bool)
    if not pairs:
        return out
    hs = np.array([p[0] for p in pairs])
    ts = np.array([p[1] for p in pairs])
    for i, m in enumerate(mined.metapaths):
        out[:, i] = np.asarray(reach_matrix(g, m)[hs, ts]).ravel() > 0
    return out


def features_from_connections(conn: np.ndarray, conf: np.ndarray, mode: SimilarityMode) -> np.ndarray:
    mode = SimilarityMode(mode)
    if mode is SimilarityMode.SUM_CONF:
        return (conn * conf).sum(axis=1)
    if mode is SimilarityMode.META_COUNT:
        return conn.sum(axis=1).astype(float)
    if mode is SimilarityMode.BINARY_FEAT:
        return conn.astype(float)
    return conn * conf


def pair_features(pair, mined: MinedPathSet, g: InstanceGraph, mode: SimilarityMode):
    if len(mined) == 0:
        raise ValidationError("mined meta-path set is empty")
    f = features_from_connections(connection_matrix([pair], mined, g), mined.confidences(), mode)
    return float(f[0]) if SimilarityMode(mode).scalar else f[0]


# ---------------------------------------------------------------------------
# L1-regularised least squares


def soft_threshold(x: float, lam: float) -> float:
    if x > lam:
        return x - lam
    if x < -lam:
        return x + lam
    return 0.0


def fit_l1_regression(X, y, reg_weight: float = 0.01, iters: int = 1000, tol: float = 1e-6):
    """Cyclic coordinate descent for (1/2n)||y - Xw - b||^2 + reg_weight*||w||_1.

    The intercept is unpenalised (handled by centring). Returns (w, b).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < 2 or len(np.unique(y)) < 2:
        raise ValidationError("need >= 2 samples with both labels present")
    xm, ym = X.mean(axis=0), y.mean()
    Xc, yc = X - xm, y - ym
    z = (Xc * Xc).sum(axis=0) / n
    w = np.zeros(p)
    resid = yc.copy()
    for _ in range(iters):
        max_delta = 0.0
        for j in range(p):
            if z[j] <= 0:
                continue
            old = w[j]
            rho = Xc[:, j] @ resid / n + z[j] * old
            new = soft_threshold(rho, reg_weight) / z[j]
            if new != old:
                resid -= Xc[:, j] * (new - old)
                w[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < tol:
            break
    return w, float(ym - xm @ w)


def predict(X, w, b) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X @ w + b


# ---------------------------------------------------------------------------
# metrics


def evaluate_lp(scores, labels) -> dict:
    """ROC-AUC (Mann-Whitney, ties count half) and step-interpolated AP."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    n_pos, n_neg = int((y == 1).sum()), int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("both classes must be present")
    ranks = rankdata(s)
    auc = (ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    # last index of each run of equal scores marks a threshold
    ends = np.r_[np.nonzero(np.diff(s_sorted))[0], len(s_sorted) - 1]
    tp_k = tp[ends]
    prec = tp_k / (ends + 1)
    rec = tp_k / n_pos
    ap = float(np.sum(np.diff(np.r_[0.0, rec]) * prec))
    return {"roc_auc": float(auc), "ap": ap}


# ---------------------------------------------------------------------------
# harness


def run_link_prediction(ds: LPDataset, mined: MinedPathSet, g: InstanceGraph,
                        mode: SimilarityMode = SimilarityMode.SUM_CONF, reg_weight: float = 0.01,
                        iters: int = 1000) -> dict:
    """Score the test split; vector modes fit the L1 model on the train split.

    ``g`` is the graph features are read from (test facts removed).
    """
    mode = SimilarityMode(mode)
    if len(mined) == 0:
        raise ValidationError("mined meta-path set is empty")
    conf = mined.confidences()
    te_pairs = [(h, t) for h, t, _ in ds.test]
    te_y = np.array([y for _, _, y in ds.test])
    X_te = features_from_connections(connection_matrix(te_pairs, mined, g), conf, mode)
    if mode.scalar:
        scores = X_te
    else:
        tr_pairs = [(h, t) for h, t, _ in ds.train]
        tr_y = np.array([y for _, _, y in ds.train])
        X_tr = features_from_connections(connection_matrix(tr_pairs, mined, g), conf, mode)
        w, b = fit_l1_regression(X_tr, tr_y, reg_weight, iters)
        scores = predict(X_te, w, b)
    res = evaluate_lp(scores, te_y)
    res.update(n_pos=int((te_y == 1).sum()), n_neg=int((te_y == 0).sum()), mode=mode.value)
    res["scores"] = [(h, t, int(y), float(s)) for (h, t), y, s in zip(te_pairs, te_y, scores)]
    return res


def rescore(mined: MinedPathSet, g: InstanceGraph) -> MinedPathSet:
    """Recompute coverage/confidence of the same meta-paths on another graph."""
    entries = []
    for m in mined.metapaths:
        rec = evaluate(g, m, mined.relation)
        entries.append((m, rec.coverage, rec.confidence))
    return MinedPathSet(mined.relation, entries).sorted()


REMOVAL_RATES = (0.0, 0.2, 0.5, 1.0)


def node_removal_study(ds: LPDataset, mined: MinedPathSet, g: InstanceGraph, rates=REMOVAL_RATES,
                       sample_fraction: float = 0.4, seed: int = 0,
                       mode: SimilarityMode = SimilarityMode.SUM_CONF, remine=None) -> list[dict]:
    """Entity-level inductive study.

    A ``sample_fraction`` of the test positives is drawn once; for each rate
    the first ``rate`` share of a fixed permutation of their nodes is removed
    from the graph used for mining and scoring. Features are still read from
    ``g``, so rate 0 must reproduce ``run_link_prediction(ds, rescore(mined, g), g)``.
    ``remine(g_train) -> MinedPathSet`` reruns mining; by default the given
    meta-paths are only rescored.
    """
    rng = np.random.default_rng(seed)
    pos = ds.positives("test")
    n_sample = int(math.floor(len(pos) * sample_fraction + 1e-9))
    idx = rng.choice(len(pos), size=n_sample, replace=False) if n_sample else np.zeros(0, int)
    nodes = sorted({e for i in sorted(idx.tolist()) for e in pos[i]})
    perm = [nodes[i] for i in rng.permutation(len(nodes))]
    rows = []
    for rate in rates:
        k = int(math.floor(len(perm) * rate + 1e-9))
        removed = perm[:k]
        g_train = remove_entities(g, removed) if removed else g
        ms = remine(g_train) if remine is not None else rescore(mined, g_train)
        res = run_link_prediction(ds, ms, g, mode)
        rows.append({"rate": rate, "roc_auc": res["roc_auc"], "ap": res["ap"],
                     "n_removed": k, "removed": removed, "graph": g_train})
    return rows
