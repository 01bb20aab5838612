"""Scoring, top-k ranking and the density-weighted sampler."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import small_index, three_cluster_plan
from defectseek import (
    ArgumentError,
    DataError,
    DimensionError,
    EmptyStoreError,
    EmbeddingMatrix,
    KnowledgeDocument,
    KnowledgeIndex,
    SimilarityScores,
    build_index,
    gen_planted_kb,
    kde_sample_retrieve,
    score_all,
    top_k,
)
from defectseek.apportion import largest_remainder


def test_score_all_matches_double_loop_oracle(rng) -> None:
    index = small_index(rng, count=30, dim=7)
    key = rng.standard_normal(7)
    got = score_all(key, index)
    want = oracles.cosine_scan(key, index.locks.rows64())
    assert np.allclose(got.values, want, atol=1e-6)
    assert np.all(np.abs(got.values) <= 1.0 + 1e-9)


def test_score_all_is_scale_invariant(rng) -> None:
    index = small_index(rng)
    key = rng.standard_normal(index.dim)
    a = score_all(key, index)
    b = score_all(3.7 * key, index)
    assert np.allclose(a.values, b.values, atol=1e-12)


def test_score_all_error_cases(rng) -> None:
    index = small_index(rng)
    with pytest.raises(DataError):
        score_all(np.zeros(index.dim), index)
    with pytest.raises(DimensionError):
        score_all(np.ones(index.dim + 1), index)
    empty = KnowledgeIndex(documents=(), locks=EmbeddingMatrix.empty(3))
    with pytest.raises(EmptyStoreError):
        score_all(np.ones(3), empty)


def test_top_k_matches_sorted_oracle(rng) -> None:
    for _ in range(20):
        index = small_index(rng, count=int(rng.integers(2, 25)))
        key = rng.standard_normal(index.dim)
        scores = score_all(key, index)
        k = int(rng.integers(1, len(index) + 3))
        result = top_k(scores, index, k)
        want = oracles.ranked_ids(list(scores.values))[: min(k, len(index))]
        assert [e.index for e in result.entries] == want


def test_top_k_tie_break_is_lowest_index() -> None:
    docs = [KnowledgeDocument(doc_id=f"d{i}", lock_row=i) for i in range(4)]
    data = np.array(
        [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.6, 0.8]], dtype=np.float32
    )
    index = build_index(docs, EmbeddingMatrix(data=data))
    result = top_k(score_all(np.array([1.0, 0.0]), index), index, 4)
    assert result.doc_ids() == ["d0", "d2", "d3", "d1"]


def test_top_k_beyond_n_returns_everything(rng) -> None:
    index = small_index(rng, count=5)
    scores = score_all(rng.standard_normal(index.dim), index)
    result = top_k(scores, index, 50)
    assert len(result.entries) == 5


def test_top_k_argument_validation(rng) -> None:
    index = small_index(rng, count=4)
    scores = score_all(rng.standard_normal(index.dim), index)
    with pytest.raises(ArgumentError):
        top_k(scores, index, 0)
    with pytest.raises(DimensionError):
        top_k(SimilarityScores(values=np.ones(3)), index, 2)


# ---------------------------------------------------------------------------
# KDE-weighted sampling


def test_kde_reduces_to_top_k_when_one_cluster_forced(rng) -> None:
    for trial in range(50):
        n = int(rng.integers(3, 40))
        index = small_index(rng, count=n, dim=6)
        key = rng.standard_normal(6)
        budget = int(rng.integers(1, n + 1))
        kde = kde_sample_retrieve(key, index, budget, seed=trial, k_max=1)
        plain = top_k(score_all(key, index), index, budget)
        assert kde.doc_ids() == plain.doc_ids()
        assert [e.score for e in kde.entries] == [e.score for e in plain.entries]


def test_kde_budget_at_least_n_returns_full_ranking(rng) -> None:
    index = small_index(rng, count=9)
    key = rng.standard_normal(index.dim)
    full = top_k(score_all(key, index), index, 9)
    for budget in (9, 10, 100):
        got = kde_sample_retrieve(key, index, budget, seed=0)
        assert got.doc_ids() == full.doc_ids()


def test_kde_result_invariants_on_planted_kb() -> None:
    kb = gen_planted_kb(three_cluster_plan(), seed=5)
    index = kb.index()
    result = kde_sample_retrieve(kb.key, index, 12, seed=5)
    ids = result.doc_ids()
    assert len(ids) == len(set(ids)) == 12
    scores = [e.score for e in result.entries]
    assert scores == sorted(scores, reverse=True)
    assert result.allocations is not None
    assert sum(result.allocations) == 12
    sizes = result.clustering.sizes()
    for take, size in zip(result.allocations, sizes):
        assert 0 <= take <= size
    # per-cluster selections are each cluster's top scorers
    values = np.asarray(score_all(kb.key, index).values)
    for c, take in enumerate(result.allocations):
        members = result.clustering.members(c)
        ranked = members[np.argsort(-values[members], kind="stable")]
        selected = sorted(e.index for e in result.entries if e.cluster == c)
        assert selected == sorted(int(i) for i in ranked[:take])


def test_kde_is_deterministic_for_fixed_seed() -> None:
    kb = gen_planted_kb(three_cluster_plan(), seed=9)
    index = kb.index()
    a = kde_sample_retrieve(kb.key, index, 15, seed=3)
    b = kde_sample_retrieve(kb.key, index, 15, seed=3)
    assert a.doc_ids() == b.doc_ids()
    assert a.allocations == b.allocations
    assert [e.score for e in a.entries] == [e.score for e in b.entries]


def test_kde_budget_validation(rng) -> None:
    index = small_index(rng, count=4)
    with pytest.raises(ArgumentError):
        kde_sample_retrieve(np.ones(index.dim), index, 0)


# ---------------------------------------------------------------------------
# Largest-remainder apportionment


def test_largest_remainder_matches_textbook_oracle(rng) -> None:
    for _ in range(200):
        n = int(rng.integers(1, 8))
        weights = rng.random(n) + 0.01
        total = int(rng.integers(0, 30))
        got = largest_remainder(weights, total)
        assert got == oracles.largest_remainder_simple(list(weights), total)


def test_largest_remainder_respects_caps() -> None:
    # bucket 0 deserves nearly everything but can hold only 2
    alloc = largest_remainder([100.0, 1.0, 1.0], 10, caps=[2, 10, 10])
    assert alloc[0] == 2
    assert sum(alloc) == 10
    assert all(a >= 0 for a in alloc)


def test_largest_remainder_exact_quota_no_leftover() -> None:
    assert largest_remainder([1.0, 1.0, 2.0], 8) == [2, 2, 4]


def test_largest_remainder_all_zero_weights_split_evenly() -> None:
    assert largest_remainder([0.0, 0.0, 0.0], 7) == [3, 2, 2]


def test_largest_remainder_validation() -> None:
    with pytest.raises(ArgumentError):
        largest_remainder([], 3)
    with pytest.raises(ArgumentError):
        largest_remainder([1.0, -0.5], 3)
    with pytest.raises(ArgumentError):
        largest_remainder([1.0], -1)
    with pytest.raises(ArgumentError):
        largest_remainder([1.0, 1.0], 5, caps=[1, 1])


@settings(max_examples=60, deadline=None)
@given(
    weights=st.lists(st.floats(0.0, 100.0), min_size=1, max_size=6),
    total=st.integers(0, 40),
)
def test_largest_remainder_always_sums_to_total(weights, total) -> None:
    alloc = largest_remainder(weights, total)
    assert sum(alloc) == total
    assert all(a >= 0 for a in alloc)
