from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hinwalk.embeddings import (EmbeddingTable, build_embeddings, load_embeddings, margin_loss,
                                pool_type_embeddings, random_init, save_embeddings,
                                train_translation_embeddings, transe_distance)
from hinwalk.errors import ConfigError, DataError, ValidationError
from hinwalk.graph import from_named


def _table(ent, rel):
    d = ent.shape[1]
    return EmbeddingTable(ent, rel, None, np.zeros(d), np.zeros(d))


def test_exact_translation_has_zero_distance():
    ent = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0]])
    rel = np.array([[1.0, 0.0]])
    tab = _table(ent, rel)
    assert transe_distance(tab, [(0, 0, 1)])[0] == 0.0
    neg = [(0, 0, 2)]
    d_neg = transe_distance(tab, neg)[0]
    assert margin_loss(tab, [(0, 0, 1)], neg)[0] == max(0.0, 1.0 - d_neg)


def test_training_reduces_distance(toy):
    tab = train_translation_embeddings(toy, d_e=16, epochs=60, seed=3)
    d = tab.history["pos_distance"]
    assert d[-1] < d[0]
    assert np.allclose(np.linalg.norm(tab.entity_vecs, axis=1), 1.0)
    tab.check_finite()


def test_single_triple_training():
    g = from_named([("a", "r", "b")], {"a": ["A"], "b": ["B"]})
    tab = train_translation_embeddings(g, d_e=8, epochs=100, seed=0)
    d = tab.history["pos_distance"]
    assert d[-1] < d[0]


def test_training_deterministic(toy):
    a = train_translation_embeddings(toy, d_e=8, epochs=10, seed=5)
    b = train_translation_embeddings(toy, d_e=8, epochs=10, seed=5)
    assert a.entity_vecs.tobytes() == b.entity_vecs.tobytes()
    assert a.relation_vecs.tobytes() == b.relation_vecs.tobytes()


def test_training_rejects_bad_config(toy):
    with pytest.raises(ConfigError):
        train_translation_embeddings(toy, d_e=0)
    with pytest.raises(ConfigError):
        train_translation_embeddings(toy, epochs=0)


def test_pooling(toy):
    tab = train_translation_embeddings(toy, d_e=8, epochs=5, seed=1)
    pooled = pool_type_embeddings(tab, toy)
    person = toy.type_id("Person")
    members = [e for e in toy.entities if person in toy.type_map[e]]
    assert len(members) == 3
    want = sum(tab.entity_vecs[e] for e in members) / 3
    np.testing.assert_allclose(pooled.type_vecs[person], want, atol=1e-12)
    city = toy.type_id("City")
    if len(toy.members(city)) == 1:
        np.testing.assert_array_equal(pooled.type_vecs[city], tab.entity_vecs[toy.members(city)[0]])


def test_pooling_symmetric_and_memberless():
    g = from_named([("a", "r", "b")], {"a": ["A"], "b": ["A"]})
    v = np.array([0.3, -0.4])
    tab = _table(np.array([v, -v]), np.zeros((1, 2)))
    np.testing.assert_array_equal(pool_type_embeddings(tab, g).type_vecs[0], 0.0)
    g2 = replace(g, type_names=g.type_names + ("Ghost",))
    with pytest.raises(ValidationError, match="Ghost"):
        pool_type_embeddings(tab, g2)


@given(st.permutations(list(range(6))))
def test_pooling_permutation_invariant(perm):
    rng = np.random.default_rng(0)
    vecs = rng.normal(size=(6, 4))
    a = vecs.mean(axis=0)
    b = vecs[list(perm)].mean(axis=0)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_random_init():
    a = random_init(5, 4, d_e=16, seed=2)
    b = random_init(5, 4, d_e=16, seed=2)
    c = random_init(5, 4, d_e=16, seed=3)
    assert np.array_equal(a.type_vecs, b.type_vecs) and np.array_equal(a.relation_vecs, b.relation_vecs)
    assert not np.array_equal(a.type_vecs, c.type_vecs)
    bound = 6 / np.sqrt(16)
    for arr in (a.type_vecs, a.relation_vecs, a.start_vec, a.stay_vec):
        assert np.all(np.abs(arr) <= bound)


def test_build_embeddings_unknown(toy):
    with pytest.raises(ConfigError):
        build_embeddings(toy, method="rotate")


def test_file_round_trip(tmp_path, toy):
    tab = build_embeddings(toy, "transe", d_e=8, seed=0, epochs=3)
    save_embeddings(tmp_path / "e.bin", tab)
    back = load_embeddings(tmp_path / "e.bin")
    np.testing.assert_allclose(back.type_vecs, tab.type_vecs, atol=1e-6)
    np.testing.assert_allclose(back.relation_matrix(), tab.relation_matrix(), atol=1e-6)
    assert back.type_names == tab.type_names and back.relation_names == tab.relation_names
    (tmp_path / "junk.bin").write_bytes(b"nope")
    with pytest.raises(DataError):
        load_embeddings(tmp_path / "junk.bin")


def test_alignment_by_name(toy):
    tab = build_embeddings(toy, "random", d_e=4, seed=0)
    flipped = EmbeddingTable(tab.entity_vecs, tab.relation_vecs[::-1], tab.type_vecs[::-1],
                             tab.start_vec, tab.stay_vec, tab.entity_names,
                             tab.relation_names[::-1], tab.type_names[::-1])
    al = flipped.aligned_to(toy)
    np.testing.assert_array_equal(al.type_vecs, tab.type_vecs)
    np.testing.assert_array_equal(al.relation_vecs, tab.relation_vecs)
