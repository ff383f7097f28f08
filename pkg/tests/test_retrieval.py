import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locvlad.embedding import VladVector
from locvlad.errors import DomainError, ValidationError
from locvlad.retrieval import build_index, query_index


def _unit_rows(rng, n, dim):
    x = rng.normal(size=(n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_single_entry():
    assert len(build_index([("a", np.ones(3))])) == 1


def test_duplicate_ids():
    with pytest.raises(ValidationError):
        build_index([("a", np.ones(2)), ("a", np.zeros(2))])


def test_mixed_lengths():
    with pytest.raises(DomainError):
        build_index([("a", np.ones(8)), ("b", np.ones(16))])


def test_empty_index():
    with pytest.raises(DomainError):
        build_index([])


def test_self_match_first():
    rng = np.random.default_rng(0)
    rows = _unit_rows(rng, 6, 5)
    index = build_index([(f"i{j}", VladVector(r, 1, 5)) for j, r in enumerate(rows)])
    hits = query_index(index, rows[3], 2).hits
    assert hits[0] == ("i3", 0.0)


def test_two_point_example():
    index = build_index([("a", [1.0, 0.0]), ("b", [0.0, 1.0])])
    ranked = query_index(index, np.array([0.9, 0.1]), 2, "l2")
    assert ranked.ids == ["a", "b"]
    assert ranked.distances == pytest.approx([np.sqrt(0.02), np.sqrt(1.62)])


def test_top_n_clamped_and_validated():
    index = build_index([("a", [1.0]), ("b", [2.0])])
    assert len(query_index(index, [0.0], 10)) == 2
    with pytest.raises(DomainError):
        query_index(index, [0.0], 0)
    with pytest.raises(DomainError):
        query_index(index, [0.0, 1.0], 1)
    with pytest.raises(DomainError):
        query_index(index, [0.0], 1, "manhattan")


def test_ties_follow_insertion_order():
    index = build_index([("z", [1.0, 0.0]), ("y", [0.0, 1.0]), ("x", [-1.0, 0.0])])
    assert query_index(index, [0.0, 0.0], 3).ids == ["z", "y", "x"]
    assert query_index(index, [0.0, 0.0], 3, "cosine").ids == ["z", "y", "x"]


def test_cosine_is_one_minus_similarity():
    index = build_index([("a", [2.0, 0.0]), ("b", [0.0, 3.0]), ("c", [-1.0, 0.0])])
    ranked = query_index(index, [1.0, 0.0], 3, "cosine")
    assert ranked.ids == ["a", "b", "c"]
    assert ranked.distances == pytest.approx([0.0, 1.0, 2.0])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 30), dim=st.integers(2, 16))
def test_unit_vectors_rank_identically(seed, n, dim):
    rng = np.random.default_rng(seed)
    rows = _unit_rows(rng, n, dim)
    index = build_index([(str(i), r) for i, r in enumerate(rows)])
    q = _unit_rows(rng, 1, dim)[0]
    a = query_index(index, q, n, "l2")
    b = query_index(index, q, n, "cosine")
    assert a.ids == b.ids
    assert sorted(a.ids) == sorted(index.ids)
    for ranked in (a, b):
        assert all(x <= y for x, y in zip(ranked.distances, ranked.distances[1:]))
        assert min(ranked.distances) >= 0
