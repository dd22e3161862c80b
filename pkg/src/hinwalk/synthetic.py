"""Seeded generators for the synthetic graphs used in tests and demos.

Every generator returns plain name-level data wrapped by ``from_named`` so
the graphs go through the same loader as files on disk.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import InstanceGraph, from_named
from .metapath import MetaPath


@dataclass
class Fixture:
    graph: InstanceGraph
    # relation name -> planted meta-path (as ids on ``graph``)
    planted: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)


def _graph(triples, types, relations=()) -> InstanceGraph:
    return from_named(triples, types, relations)


def _path(g: InstanceGraph, *items) -> MetaPath:
    """``_path(g, "S", "a", "M", "b", "T")`` -> MetaPath with ids."""
    types = [g.type_id(x) for x in items[0::2]]
    rels = [g.relation_id(x) for x in items[1::2]]
    return MetaPath(tuple(types), tuple(rels))


def random_hin(seed: int, max_entities: int = 200, max_types: int = 10, max_relations: int = 8,
               multi_type_prob: float = 0.05) -> InstanceGraph:
    """A small random graph with typed relations.

    Each relation gets a random domain and range type and draws its
    triples between their members; some entities carry a second type, which
    adds schema edges that instances only partly support.
    """
    rng = np.random.default_rng(seed)
    n_e = int(rng.integers(20, max_entities + 1))
    n_t = int(rng.integers(2, max_types + 1))
    n_r = int(rng.integers(1, max_relations + 1))
    types = {}
    members: dict = {t: [] for t in range(n_t)}
    for e in range(n_e):
        ts = {int(rng.integers(n_t))}
        if rng.random() < multi_type_prob:
            ts.add(int(rng.integers(n_t)))
        types[f"e{e}"] = sorted(f"T{t}" for t in ts)
        for t in ts:
            members[t].append(e)
    triples = set()
    for r in range(n_r):
        dom, ran = rng.integers(n_t, size=2)
        heads, tails = members[int(dom)], members[int(ran)]
        if not heads or not tails:
            continue
        for _ in range(int(rng.integers(1, 3 * max(len(heads), len(tails)) + 1))):
            h = heads[rng.integers(len(heads))]
            t = tails[rng.integers(len(tails))]
            triples.add((f"e{h}", f"r{r}", f"e{t}"))
    return _graph(sorted(triples), types, [f"r{i}" for i in range(n_r)])


def guiding_example() -> Fixture:
    """Citizens and graduates of one country.

    200 people are citizens; 150 of them graduated from a domestic
    university; a further 100 non-citizens graduated there too.
    """
    triples, types = [], {"Germany": ["Country"]}
    unis = [f"uni{k}" for k in range(5)]
    for u in unis:
        types[u] = ["University"]
        triples.append((u, "LocatedIn", "Germany"))
    for i in range(200):
        p = f"citizen{i}"
        types[p] = ["Person"]
        triples.append((p, "isCitizenOf", "Germany"))
        if i < 150:
            triples.append((p, "GraduatedFrom", unis[i % 5]))
    for i in range(100):
        p = f"intl{i}"
        types[p] = ["Person"]
        triples.append((p, "GraduatedFrom", unis[i % 5]))
    g = _graph(triples, types)
    return Fixture(g, {"isCitizenOf": _path(g, "Person", "GraduatedFrom", "University",
                                            "LocatedIn", "Country")})


def convergence_fixture(seed: int = 0, n_pairs: int = 30, n_decoys: int = 20,
                        n_chains: int = 6, n_dead_ends: int = 3) -> Fixture:
    """One perfect two-hop explanation of ``rq`` among many weak ones.

    S -a-> M -b-> T connects exactly the ``rq`` pairs. Each decoy type D_j
    gives S -x_j-> D_j -y_j-> T, wired to mostly wrong pairs; chains
    D_j -z-> D_{j+1} add three-hop decoys; dead-end types never reach T.
    """
    rng = np.random.default_rng(seed)
    triples, types = [], {}
    S = [f"s{i}" for i in range(n_pairs)]
    T = [f"t{i}" for i in range(n_pairs)]
    for i in range(n_pairs):
        types[S[i]], types[T[i]] = ["S"], ["T"]
        types[f"m{i}"] = ["M"]
        triples += [(S[i], "rq", T[i]), (S[i], "a", f"m{i}"), (f"m{i}", "b", T[i])]
    for j in range(n_decoys):
        d = f"d{j}"
        types[d] = [f"D{j}"]
        src = rng.choice(n_pairs, size=3, replace=False)
        # one matching tail at most, the rest mismatched
        dst = [int(src[0])] + [int(x) for x in rng.choice(
            [k for k in range(n_pairs) if k not in set(src.tolist())], size=4, replace=False)]
        for i in src:
            triples.append((S[i], f"x{j}", d))
        for k in dst:
            triples.append((d, f"y{j}", T[k]))
    for j in range(min(n_chains, n_decoys - 1)):
        triples.append((f"d{j}", "z", f"d{j + 1}"))
    for j in range(n_dead_ends):
        e = f"dead{j}"
        types[e] = [f"E{j}"]
        triples.append((S[int(rng.integers(n_pairs))], f"w{j}", e))
    g = _graph(triples, types)
    return Fixture(g, {"rq": _path(g, "S", "a", "M", "b", "T")},
                   {"n_decoys": n_decoys})


def inductive_fixture(seed: int = 0, n_groups: int = 6, n_pairs: int = 20, n_decoy_types: int = 5,
                      synonym_overlap: float = 0.85) -> Fixture:
    """Eight target relations, each explained by a planted two-hop path.

    Group k has types S_k, M_k, T_k, target relation q_k and the path
    S_k -a_k-> M_k -b_k-> T_k. Two extra targets h_0, h_1 are noisy synonyms
    of q_0, q_1 (same type pair, ``synonym_overlap`` of the pairs shared) and
    are meant to be held out. Shared decoy types D_j connect every group.
    """
    rng = np.random.default_rng(seed)
    triples, types = [], {}
    for j in range(n_decoy_types):
        types[f"d{j}"] = [f"D{j}"]
    for k in range(n_groups):
        for i in range(n_pairs):
            s, m, t = f"s{k}_{i}", f"m{k}_{i}", f"t{k}_{i}"
            types[s], types[m], types[t] = [f"S{k}"], [f"M{k}"], [f"T{k}"]
            triples += [(s, f"q{k}", t), (s, f"a{k}", m), (m, f"b{k}", t)]
        for j in range(n_decoy_types):
            i1, i2 = rng.choice(n_pairs, size=2, replace=False)
            triples.append((f"s{k}_{i1}", f"x{j}", f"d{j}"))
            triples.append((f"d{j}", f"y{j}", f"t{k}_{i2}"))
    for j in range(n_decoy_types):
        for j2 in range(n_decoy_types):
            if j != j2:
                triples.append((f"d{j}", "z", f"d{j2}"))
    n_keep = int(round(synonym_overlap * n_pairs))
    for h in range(2):
        keep = rng.choice(n_pairs, size=n_keep, replace=False)
        for i in sorted(keep.tolist()):
            triples.append((f"s{h}_{i}", f"h{h}", f"t{h}_{i}"))
    g = _graph(triples, types)
    planted = {f"q{k}": _path(g, f"S{k}", f"a{k}", f"M{k}", f"b{k}", f"T{k}") for k in range(n_groups)}
    planted["h0"] = planted["q0"]
    planted["h1"] = planted["q1"]
    return Fixture(g, planted, {"train": [f"q{k}" for k in range(n_groups)], "test": ["h0", "h1"]})


def complex_fixture(seed: int = 0, n_types: int = 32, n_targets: int = 4, n_noise_relations: int = 20,
                    n_noise_triples: int = 150, reuse_prob: float = 0.3, multi_type_prob: float = 0.3,
                    per_target: int = 25) -> Fixture:
    """A schema-complex graph: a dense schema whose compositions rarely have instances.

    Noise triples join random types through mostly fresh entities (an
    existing one is reused with ``reuse_prob``), and some noise entities
    carry a second type, so the derived schema has many edges while few
    multi-hop meta-paths are grounded. Target relation g_k links two types
    through dedicated single-typed entities and is explained exactly by a
    planted composition u_k, v_k through a third type; weaker explanations
    (a direct relation c_k on half the pairs, a second composition p_k, q_k
    on about 60%) give partial credit.
    """
    rng = np.random.default_rng(seed)
    types, triples = {}, []
    planted = {}
    used_pairs = set()
    for k in range(n_targets):
        a, mid, b = 3 * k, 3 * k + 1, 3 * k + 2
        used_pairs.add((a, b))
        for i in range(per_target):
            h, m, t = f"g{k}h{i}", f"g{k}m{i}", f"g{k}t{i}"
            types[h], types[m], types[t] = [f"T{a}"], [f"T{mid}"], [f"T{b}"]
            triples += [(h, f"g{k}", t), (h, f"u{k}", m), (m, f"v{k}", t)]
        planted[f"g{k}"] = (f"T{a}", f"u{k}", f"T{mid}", f"v{k}", f"T{b}")
        # partial explanations: a correlated direct relation on half the
        # pairs and a second composition through another type on 60%
        alt = 3 * n_targets + k
        for i in range(per_target):
            if i % 2 == 0:
                triples.append((f"g{k}h{i}", f"c{k}", f"g{k}t{i}"))
            if rng.random() < 0.6:
                types[f"g{k}w{i}"] = [f"T{alt}"]
                triples += [(f"g{k}h{i}", f"p{k}", f"g{k}w{i}"), (f"g{k}w{i}", f"q{k}", f"g{k}t{i}")]
    pool: dict = {t: [] for t in range(n_types)}
    counter = 0

    def entity(t):
        nonlocal counter
        if pool[t] and rng.random() < reuse_prob:
            return pool[t][rng.integers(len(pool[t]))]
        name = f"x{counter}"
        counter += 1
        ts = {f"T{t}"}
        if rng.random() < multi_type_prob:
            ts.add(f"T{rng.integers(n_types)}")
        types[name] = sorted(ts)
        pool[t].append(name)
        return name

    for _ in range(n_noise_triples):
        while True:
            ta, tb = (int(x) for x in rng.integers(n_types, size=2))
            if (ta, tb) not in used_pairs:
                break
        triples.append((entity(ta), f"n{rng.integers(n_noise_relations)}", entity(tb)))
    g = _graph(triples, types)
    return Fixture(g, {k: _path(g, *v) for k, v in planted.items()},
                   {"targets": [f"g{k}" for k in range(n_targets)]})


def similarity_fixture(seed: int = 0, n_pairs: int = 200, n_false_strong: int = 20,
                       group: int = 10) -> Fixture:
    """Two explanations of ``rq``: a strong one (confidence 0.9) and a weak one (0.1).

    The strong path S -a-> M -b-> T links 180 true pairs and 20 wrong ones.
    The weak path S -c-> H -d-> T links each group of ``group`` heads to a
    single tail, the true partner of one of them.
    """
    rng = np.random.default_rng(seed)
    triples, types = [], {}
    n_strong = n_pairs - n_false_strong
    for i in range(n_pairs):
        s, t, m = f"s{i}", f"t{i}", f"m{i}"
        types[s], types[t], types[m] = ["S"], ["T"], ["M"]
        triples.append((s, "rq", t))
        triples.append((s, "a", m))
    for i in range(n_strong):
        triples.append((f"m{i}", "b", f"t{i}"))
    # the remaining m's point at wrong tails
    for i in range(n_strong, n_pairs):
        j = int(rng.integers(n_pairs - 1))
        j = j if j < i else j + 1
        triples.append((f"m{i}", "b", f"t{j}"))
    perm = rng.permutation(n_pairs)
    for gi in range(n_pairs // group):
        hub = f"hub{gi}"
        types[hub] = ["H"]
        heads = perm[gi * group:(gi + 1) * group]
        for i in heads:
            triples.append((f"s{i}", "c", hub))
        triples.append((hub, "d", f"t{heads[0]}"))
    g = _graph(triples, types)
    return Fixture(g, {"strong": _path(g, "S", "a", "M", "b", "T"),
                       "weak": _path(g, "S", "c", "H", "d", "T")})


def chain_schema_graph(n: int = 4) -> InstanceGraph:
    """A single directed chain of types A0 -> A1 -> ... (one entity each)."""
    triples = [(f"e{i}", f"r{i}", f"e{i + 1}") for i in range(n - 1)]
    return _graph(triples, {f"e{i}": [f"A{i}"] for i in range(n)})


def bipartite_schema_graph(n_mid: int = 3, n_rel: int = 2) -> InstanceGraph:
    """Src -> Mid_k -> Tgt with ``n_rel`` parallel relations on each side."""
    triples, types = [], {"src": ["Src"], "tgt": ["Tgt"]}
    for k in range(n_mid):
        types[f"mid{k}"] = [f"Mid{k}"]
        for r in range(n_rel):
            triples.append(("src", f"in{r}", f"mid{k}"))
            triples.append((f"mid{k}", f"out{r}", "tgt"))
    return _graph(triples, types)
