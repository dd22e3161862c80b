"""Small shared builders for the policy and beam tests."""
import numpy as np

from hinwalk.embeddings import random_init
from hinwalk.env import SchemaEnv
from hinwalk.graph import Query, derive_schema_graph, from_named, type_pairs_for_relation
from hinwalk.policy import PolicyParams, RolloutBatch, episodes_to_trajectories, run_episodes

from oracles import all_action_sequences


def small_policy(g, s, d_e=4, d_h=6, seed=0, mask_direct=True, max_hops=4, zero=False, plain=False):
    """A small policy; ``plain`` keeps the stock initialisation untouched."""
    emb = random_init(g.n_types, g.n_relations, d_e, seed=seed)
    env = SchemaEnv(s, g.n_types, g.n_relations, max_hops=max_hops, mask_direct=mask_direct)
    if zero:
        return PolicyParams.zeros(d_e, d_h, emb), env
    if plain:
        return PolicyParams.init(d_e, d_h, seed=seed, emb=emb), env
    # shrink so scores stay moderate and the softmax is not saturated
    emb.type_vecs = emb.type_vecs * 0.5
    emb.relation_vecs = emb.relation_vecs * 0.5
    params = PolicyParams.init(d_e, d_h, seed=seed, emb=emb)
    rng = np.random.default_rng(seed + 1)
    for k in ("lstm0_b", "lstm1_b", "b1", "b2"):
        params.tensors[k] = rng.normal(scale=0.1, size=params[k].shape)
    return params, env


def all_queries(g, s):
    out = []
    for r in range(g.n_relations):
        out += [Query(p.src, r, p.dst) for p in type_pairs_for_relation(g, s, r)]
    return out


def random_batch(g, s, params, env, seed=0):
    qs = all_queries(g, s)
    ep = run_episodes(params, env, qs * 2, rng=np.random.default_rng(seed))
    trs = episodes_to_trajectories(env, ep)
    rewards = np.random.default_rng(seed + 5).random(len(trs))
    return RolloutBatch(trs, rewards, ep.entropies, ep.choice)


def four_type_graph():
    triples = [("a0", "p", "b0"), ("a0", "s", "c0"), ("b0", "p", "c0"), ("b0", "x", "d0"),
               ("c0", "s", "d0"), ("c0", "p", "a1"), ("d0", "x", "a1"), ("a1", "q", "d0"),
               ("b0", "s", "b1")]
    types = {"a0": ["A"], "a1": ["A"], "b0": ["B"], "b1": ["B"], "c0": ["C"], "d0": ["D"]}
    g = from_named(triples, types)
    return g, derive_schema_graph(g)


FOUR_TYPE_QUERY = Query(0, 3, 3)  # A -q-> D


def exhaustive_ranking(params, env, q):
    """Every legal action sequence with its log-prob, best first, ties by sequence."""
    seqs = all_action_sequences(env, q)
    ep = run_episodes(params, env, [q] * len(seqs), forced=np.array(seqs, dtype=np.int64))
    lps = ep.log_probs.sum(axis=1)
    return sorted(zip(seqs, lps.tolist()), key=lambda x: (-x[1], x[0]))


def beam_sequence(env, tr):
    from hinwalk.policy import trajectory_choices
    return tuple(trajectory_choices(env, [tr])[0].tolist())
