import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hinwalk.env import trajectory_to_metapath
from hinwalk.errors import ValidationError
from hinwalk.inference import (MinedPathSet, answer_query, beam_metapaths, beam_search, evaluate_qa,
                               load_mined, mine_metapaths, qa_metrics, save_mined)
from hinwalk.metapath import MetaPath
from hinwalk.policy import run_episodes

from helpers import FOUR_TYPE_QUERY, beam_sequence, exhaustive_ranking, four_type_graph, small_policy
from oracles import all_action_sequences


def _policy(g, s, seed=0, zero=False, max_hops=4):
    return small_policy(g, s, seed=seed, zero=zero, max_hops=max_hops, plain=True)


exhaustive = exhaustive_ranking
_seq = beam_sequence
QUERY = FOUR_TYPE_QUERY


def test_width_one_is_greedy():
    g, s = four_type_graph()
    for seed in range(5):
        p, env = _policy(g, s, seed)
        (tr, lp), = beam_search(p, env, QUERY, 1)
        ep = run_episodes(p, env, [QUERY], greedy=True)
        assert _seq(env, tr) == tuple(ep.choice[0].tolist())
        assert lp == pytest.approx(ep.log_probs[0].sum(), abs=1e-10)


def test_wide_beam_is_exhaustive_order():
    g, s = four_type_graph()
    p, env = _policy(g, s, 1)
    ref = exhaustive(p, env, QUERY)
    got = beam_search(p, env, QUERY, len(ref) + 5)
    assert len(got) == len(ref)
    for (tr, lp), (seq, lp_ref) in zip(got, ref):
        assert lp == pytest.approx(lp_ref, abs=1e-10)
    assert [_seq(env, tr) for tr, _ in got] == [seq for seq, _ in ref]


@pytest.mark.parametrize("seed", range(5))
def test_width_eight_top_five_matches_exhaustive(seed):
    g, s = four_type_graph()
    assert g.n_types == 4
    p, env = _policy(g, s, seed)
    ref = exhaustive(p, env, QUERY)[:5]
    got = beam_search(p, env, QUERY, 8)[:5]
    assert [_seq(env, tr) for tr, _ in got] == [seq for seq, _ in ref]


def test_uniform_policy_finds_every_arriving_metapath():
    g, s = four_type_graph()
    p, env = _policy(g, s, zero=True)
    seqs = all_action_sequences(env, QUERY)
    from hinwalk.inference import _sequence_to_trajectory
    want = set()
    for seq in seqs:
        tr = _sequence_to_trajectory(env, QUERY, seq, [0.0] * len(seq))
        if tr.arrived:
            want.add(trajectory_to_metapath(tr).encoding)
    got = beam_metapaths(p, env, QUERY, len(seqs))
    assert {m.encoding for m in got} == want
    assert len(got) == len(want)


@given(st.integers(0, 1000), st.integers(1, 6), st.integers(0, 6))
def test_prefix_consistency(seed, w1, extra):
    g, s = four_type_graph()
    p, env = _policy(g, s, seed, max_hops=1)
    a = beam_search(p, env, QUERY, w1)
    b = beam_search(p, env, QUERY, w1 + extra)[:w1]
    assert [_seq(env, t) for t, _ in a] == [_seq(env, t) for t, _ in b]


def test_mined_set_deduplicated_and_sorted():
    g, s = four_type_graph()
    p, env = _policy(g, s, 2)
    mined = mine_metapaths(p, env, g, s, 3, width=50)
    encs = [m.encoding for m in mined.metapaths]
    assert len(encs) == len(set(encs))
    conf = mined.confidences()
    assert np.all(conf[:-1] >= conf[1:])
    with pytest.raises(ValidationError):
        MinedPathSet(3, [mined.entries[0], mined.entries[0]])


def test_toy_answer_query(toy):
    m = MetaPath.parse("Person -GraduatedFrom-> University -LocatedIn-> Country", toy)
    r = toy.relation_id("isCitizenOf")
    mined = MinedPathSet(r, [(m, 1.0, 2 / 3)])
    ger = toy.entity_id("Germany")
    res = answer_query(toy.entity_id("MaxPlanck"), r, mined, toy, gold=ger)
    assert res.scores == {ger: 2 / 3} and res.rank == 1
    res = answer_query(toy.entity_id("MaxPlanck"), r, mined, toy, gold=toy.entity_id("France"))
    assert math.isinf(res.rank) and res.reciprocal == 0.0
    with pytest.raises(ValidationError):
        answer_query(999, r, mined, toy)


def test_max_pooling_and_optimistic_ties(toy):
    r = toy.relation_id("isCitizenOf")
    grad = MetaPath.parse("Person -GraduatedFrom-> University -LocatedIn-> Country", toy)
    born = MetaPath.parse("Person -BornIn-> City -LocatedIn-> Country", toy)
    work = MetaPath.parse("Scientist -WorksAt-> University -LocatedIn-> Country", toy)
    entries = [(grad, 1.0, 0.4), (born, 1.0, 0.9), (work, 1.0, 0.1)]
    head = toy.entity_id("MaxPlanck")
    a = answer_query(head, r, MinedPathSet(r, entries), toy)
    b = answer_query(head, r, MinedPathSet(r, entries[::-1]), toy)
    assert a.scores == b.scores == {toy.entity_id("Germany"): 0.9}
    # a tie with a competitor still ranks first
    mc = toy.entity_id("MarieCurie")
    tie = answer_query(mc, r, MinedPathSet(r, [(grad, 1.0, 0.5)]), toy, gold=toy.entity_id("France"))
    assert tie.rank == 1


def test_metrics_arithmetic():
    m = qa_metrics([2, 4, 11])
    assert m["hits1"] == 0 and m["hits3"] == pytest.approx(1 / 3) and m["hits10"] == pytest.approx(2 / 3)
    assert m["mrr"] == pytest.approx((1 / 2 + 1 / 4 + 1 / 11) / 3)
    assert qa_metrics([1, 1, 1]) == {"hits1": 1.0, "hits3": 1.0, "hits10": 1.0, "mrr": 1.0, "n": 3}
    m = qa_metrics([1, math.inf])
    assert m["mrr"] == 0.5 and m["hits10"] == 0.5
    with pytest.raises(ValidationError):
        qa_metrics([])


@given(st.lists(st.one_of(st.integers(1, 30), st.just(math.inf)), min_size=1, max_size=20))
def test_hits_monotone(ranks):
    m = qa_metrics(ranks)
    assert m["hits1"] <= m["hits3"] <= m["hits10"]
    assert 0 <= m["mrr"] <= 1


def test_evaluate_qa_and_mined_round_trip(tmp_path, toy):
    r = toy.relation_id("isCitizenOf")
    grad = MetaPath.parse("Person -GraduatedFrom-> University -LocatedIn-> Country", toy)
    mined = MinedPathSet(r, [(grad, 1.0, 2 / 3)])
    test = [(toy.entity_id("MaxPlanck"), r, toy.entity_id("Germany")),
            (toy.entity_id("MarieCurie"), r, toy.entity_id("France"))]
    metrics, ranks = evaluate_qa(test, {r: mined}, toy)
    assert metrics["hits1"] == 1.0 and [q.rank for q in ranks] == [1, 1]
    with pytest.raises(ValidationError):
        evaluate_qa(test, {}, toy)
    save_mined(tmp_path / "m.tsv", [mined], toy)
    back = load_mined(tmp_path / "m.tsv", toy)
    assert back[r].entries == mined.entries
