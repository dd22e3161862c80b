import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from hinwalk.env import Action, STAY
from hinwalk.errors import ParseError, ValidationError
from hinwalk.graph import Query, derive_schema_graph, from_named, remove_triples
from hinwalk.metapath import (EvalCache, MetaPath, arrival_indicator, confidence, connected_pairs,
                              coverage, evaluate, evaluate_cached, read_scored_tsv, reward, valid_rate,
                              write_scored_tsv)
from hinwalk.synthetic import guiding_example, random_hin

from oracles import dfs_all_metapath_pairs, dfs_connected_pairs, exact_scores, schema_metapaths

GRAD = "Person -GraduatedFrom-> University -LocatedIn-> Country"


def names(g, pairs):
    return {(g.entity_names[a], g.entity_names[b]) for a, b in pairs}


def test_toy_connected_pairs(toy):
    m = MetaPath.parse(GRAD, toy)
    got = connected_pairs(toy, m)
    assert names(toy, got) == {("MaxPlanck", "Germany"), ("MarieCurie", "France"), ("JohnDoe", "Germany")}
    assert got == dfs_connected_pairs(toy, m.node_types, m.relations)
    m2 = MetaPath.parse("Scientist -WorksAt-> University -LocatedIn-> Country", toy)
    assert names(toy, connected_pairs(toy, m2)) == {("MaxPlanck", "Germany")}


def test_empty_relation_single_edge():
    g = from_named([("a", "r", "b")], {"a": ["A"], "b": ["B"]}, relations=["r", "empty"])
    assert connected_pairs(g, MetaPath((0, 1), (1,))) == set()


def test_toy_scores(toy):
    m = MetaPath.parse(GRAD, toy)
    r = toy.relation_id("isCitizenOf")
    assert coverage(toy, m, r) == 1.0
    assert confidence(toy, m, r) == pytest.approx(2 / 3, abs=1e-12)
    want = exact_scores(dfs_connected_pairs(toy, m.node_types, m.relations), set(toy.pairs(r)))
    rec = evaluate(toy, m, r)
    assert (Fraction(rec.coverage).limit_denominator(1000), Fraction(rec.confidence).limit_denominator(1000)) == want


def test_guiding_example_scores():
    fx = guiding_example()
    g = fx.graph
    r = g.relation_id("isCitizenOf")
    m = fx.planted["isCitizenOf"]
    assert coverage(g, m, r) == pytest.approx(0.75, abs=1e-12)
    # the formula gives 150/250; the inline prose figure of 0.5 is not matched
    assert confidence(g, m, r) == pytest.approx(0.6, abs=1e-12)


def test_single_edge_coverage_is_one(toy):
    r = toy.relation_id("BornIn")
    m = MetaPath((toy.type_id("Person"), toy.type_id("City")), (r,))
    assert coverage(toy, m, r) == 1.0


def test_degenerate_denominators(toy):
    r = toy.relation_id("LivesIn")
    rec = evaluate(toy, MetaPath.parse(GRAD, toy), r)
    assert rec.coverage == 0.0 and rec.degenerate
    empty = MetaPath.parse("City -LocatedIn-> Country -LocatedIn-> Country", toy)
    rec = evaluate(toy, empty, toy.relation_id("isCitizenOf"))
    assert rec.n_connected == 0 and rec.confidence == 0.0


@given(st.integers(0, 10_000))
def test_connectivity_matches_dfs_oracle(seed):
    g = random_hin(seed, max_entities=50, max_types=6, max_relations=5)
    oracle = dfs_all_metapath_pairs(g, max_hops=4)
    schema = derive_schema_graph(g)
    rng = random.Random(seed)
    paths = list(schema_metapaths(schema, g.n_types, 4))
    for types, rels in rng.sample(paths, min(60, len(paths))):
        m = MetaPath(types, rels)
        assert connected_pairs(g, m) == oracle.get(m.encoding, set())
    for enc, pairs in itertools.islice(oracle.items(), 60):
        assert connected_pairs(g, MetaPath.from_encoding(enc)) == pairs


@given(st.integers(0, 10_000), st.data())
def test_scores_match_exact_fractions(seed, data):
    g = random_hin(seed, max_entities=50, max_types=6, max_relations=5)
    schema = derive_schema_graph(g)
    paths = list(schema_metapaths(schema, g.n_types, 3))
    types, rels = data.draw(st.sampled_from(paths))
    r_q = data.draw(st.integers(0, g.n_relations - 1))
    m = MetaPath(types, rels)
    cov, conf = exact_scores(dfs_connected_pairs(g, types, rels), set(g.pairs(r_q)))
    rec = evaluate(g, m, r_q)
    assert rec.coverage == pytest.approx(float(cov), abs=1e-12)
    assert rec.confidence == pytest.approx(float(conf), abs=1e-12)
    assert 0 <= rec.coverage <= 1 and 0 <= rec.confidence <= 1
    # shared numerator
    assert rec.n_both == round(rec.confidence * rec.n_connected)


@given(st.integers(0, 10_000), st.data())
def test_removal_is_monotone(seed, data):
    g = random_hin(seed, max_entities=50, max_types=6, max_relations=5)
    schema = derive_schema_graph(g)
    paths = list(schema_metapaths(schema, g.n_types, 3))
    types, rels = data.draw(st.sampled_from(paths))
    drop = data.draw(st.sets(st.sampled_from(sorted(g.triples)), max_size=15))
    m = MetaPath(types, rels)
    assert connected_pairs(remove_triples(g, drop), m) <= connected_pairs(g, m)


def _traj(*actions):
    return [(None, a) for a in actions]


def test_arrival_indicator():
    q = Query(0, 3, 0)
    assert arrival_indicator(_traj(*[Action(STAY, 0)] * 4), q) == 0
    q2 = Query(0, 1, 2)
    assert arrival_indicator(_traj(Action(1, 2), Action(STAY, 2)), q2) == 1
    assert arrival_indicator(_traj(Action(1, 2), Action(4, 1)), q2) == 0


def test_reward_values(toy):
    fx = guiding_example()
    g = fx.graph
    rec = evaluate(g, fx.planted["isCitizenOf"], g.relation_id("isCitizenOf"))
    assert reward(rec, 1, 1.0, 1.0) == pytest.approx(2.35 / 3, abs=1e-12)
    assert reward(None, 0) == 0.0
    full = evaluate(toy, MetaPath.parse("Person -BornIn-> City", toy), toy.relation_id("BornIn"))
    assert reward(full, 1) == 1.0
    with pytest.raises(ValidationError):
        reward(rec, 1, -1.0, 1.0)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1),
       st.integers(0, 1), st.floats(0, 5), st.floats(0, 5))
def test_reward_monotone(c1, c2, f1, f2, a, l1, l2):
    from hinwalk.metapath import EvalRecord
    m = MetaPath((0, 1), (0,))
    lo = EvalRecord(m, 0, min(c1, c2), min(f1, f2), 1)
    hi = EvalRecord(m, 0, max(c1, c2), max(f1, f2), 1)
    assert reward(lo, a, l1, l2) <= reward(hi, a, l1, l2) + 1e-12
    assert reward(lo, 0, l1, l2) <= reward(lo, 1, l1, l2) + 1e-12


def test_valid_rate(toy):
    good = MetaPath.parse(GRAD, toy)
    bad = MetaPath.parse("City -LocatedIn-> Country -LocatedIn-> Country", toy)
    assert valid_rate([good, bad, good], toy) == 0.5
    s = derive_schema_graph(toy)
    assert valid_rate([MetaPath((a, b), (r,)) for a, r, b in s.edges], toy) == 1.0
    with pytest.raises(ValidationError):
        valid_rate([], toy)


def test_valid_rate_random_walks_oracle(toy_aug):
    g, s = toy_aug
    rng = random.Random(7)
    oracle = dfs_all_metapath_pairs(g, max_hops=4)
    ms = []
    while len(ms) < 20:
        t = rng.randrange(g.n_types)
        types, rels = [t], []
        for _ in range(rng.randint(1, 4)):
            out = list(s.out_edges(types[-1]))
            if not out:
                break
            r, d = rng.choice(out)
            rels.append(r)
            types.append(d)
        if rels:
            ms.append(MetaPath(types, rels))
    distinct = {m.encoding for m in ms}
    want = sum(1 for e in distinct if oracle.get(e)) / len(distinct)
    assert valid_rate(ms, g) == want


def test_cache_hits(toy):
    cache = EvalCache()
    r = toy.relation_id("isCitizenOf")
    m = MetaPath.parse(GRAD, toy)
    a = evaluate_cached(cache, toy, m, r)
    b = evaluate_cached(cache, toy, m, r)
    assert a is b and cache.hits == 1 and cache.misses == 1
    m2 = MetaPath.parse("Scientist -GraduatedFrom-> University -LocatedIn-> Country", toy)
    assert m.encoding != m2.encoding


def test_cache_replay(toy_aug):
    g, s = toy_aug
    paths = [MetaPath(t, r) for t, r in itertools.islice(schema_metapaths(s, g.n_types, 3), 100)]
    assert len(paths) == 100
    cache = EvalCache()
    for m in paths:
        evaluate_cached(cache, g, m, 0)
    cache.hits = cache.misses = 0
    for m in paths:
        evaluate_cached(cache, g, m, 0)
    assert (cache.hits, cache.misses) == (100, 0)


def test_text_round_trip(toy):
    m = MetaPath.parse(GRAD, toy)
    assert m.format(toy) == GRAD
    assert MetaPath.from_encoding(m.encoding) == m
    with pytest.raises(ValidationError):
        MetaPath((0,), ())


def test_scored_tsv_round_trip(tmp_path, toy):
    r = toy.relation_id("isCitizenOf")
    m = MetaPath.parse(GRAD, toy)
    rows = [(r, m, 1.0, 2 / 3)]
    write_scored_tsv(tmp_path / "s.tsv", rows, toy)
    assert read_scored_tsv(tmp_path / "s.tsv", toy) == rows
    (tmp_path / "bad.tsv").write_text("isCitizenOf\tPerson\n")
    with pytest.raises(ParseError):
        read_scored_tsv(tmp_path / "bad.tsv", toy)
