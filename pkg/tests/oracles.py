"""Independent reference computations used to check the fast code paths.

Nothing here touches sparse matrices or the policy internals; everything is
plain Python over triples and type sets.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from fractions import Fraction


def typed_adjacency(g):
    out = defaultdict(list)
    for h, r, t in g.triples:
        out[h].append((r, t))
    return out


def dfs_all_metapath_pairs(g, max_hops=4):
    """Every meta-path with at least one instance, mapped to its (head, tail) pairs.

    Walks every instance path of up to ``max_hops`` edges from every entity
    and records each typing of it.
    """
    adj = typed_adjacency(g)
    result = defaultdict(set)

    def walk(start, node, enc_options, depth):
        if depth == max_hops:
            return
        for r, nxt in adj.get(node, ()):
            new_opts = [enc + (r, ty) for enc in enc_options for ty in g.types_of(nxt)]
            for enc in new_opts:
                result[enc].add((start, nxt))
            walk(start, nxt, new_opts, depth + 1)

    for e in sorted(g.entities):
        walk(e, e, [(ty,) for ty in g.types_of(e)], 0)
    return result


def dfs_connected_pairs(g, node_types, relations):
    """Pairs joined by an instance path of one meta-path (direct DFS)."""
    adj = typed_adjacency(g)
    out = set()
    for e in sorted(g.entities):
        if node_types[0] not in g.types_of(e):
            continue
        frontier = {e}
        for r, ty in zip(relations, node_types[1:]):
            frontier = {t for u in frontier for rr, t in adj.get(u, ()) if rr == r and ty in g.types_of(t)}
            if not frontier:
                break
        out.update((e, t) for t in frontier)
    return out


def exact_scores(pairs_m, pairs_r):
    """(coverage, confidence) as Fractions with the 0-denominator guard."""
    both = len(pairs_m & pairs_r)
    cov = Fraction(both, len(pairs_r)) if pairs_r else Fraction(0)
    conf = Fraction(both, len(pairs_m)) if pairs_m else Fraction(0)
    return cov, conf


def schema_metapaths(schema, n_types, max_hops=4):
    """Every schema-consistent meta-path of 1..max_hops relations."""
    layer = [((t,), ()) for t in range(n_types)]
    for _ in range(max_hops):
        nxt = []
        for types, rels in layer:
            for r, d in schema.out_edges(types[-1]):
                nxt.append((types + (d,), rels + (r,)))
        yield from nxt
        layer = nxt


def all_action_sequences(env, q):
    """Every legal candidate-index sequence of an episode (exhaustive)."""
    from hinwalk.env import State

    rel_tab, dst_tab, valid_tab = env.candidate_table()
    out = []

    def rec(state, seq):
        if state.step == env.max_hops:
            out.append(tuple(seq))
            return
        t = state.current_type
        for a in range(valid_tab.shape[1]):
            if not valid_tab[t, a]:
                continue
            r, d = int(rel_tab[t, a]), int(dst_tab[t, a])
            if env.mask_direct and not state.moved and r == q.relation and d == q.tgt_type:
                continue
            nxt = State(d, q, state.step + 1, state.moved or r != env.stay_index)
            rec(nxt, seq + [a])

    rec(env.reset(q), [])
    return out


def brute_auc(scores, labels):
    """Pairwise comparison AUC with ties counted half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = Fraction(0)
    for p, n in itertools.product(pos, neg):
        total += 1 if p > n else Fraction(1, 2) if p == n else 0
    return total / (len(pos) * len(neg))


def brute_ap(scores, labels):
    """Step-interpolated AP: walk distinct thresholds from the top."""
    n_pos = sum(labels)
    ap = Fraction(0)
    prev_recall = Fraction(0)
    for thr in sorted(set(scores), reverse=True):
        sel = [y for s, y in zip(scores, labels) if s >= thr]
        tp = sum(sel)
        recall = Fraction(tp, n_pos)
        ap += (recall - prev_recall) * Fraction(tp, len(sel))
        prev_recall = recall
    return ap
