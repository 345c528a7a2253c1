import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graph_gen import assign_uniform_weights, gen_erdos_renyi
from objectives import (
    CutGraph,
    CutOracle,
    DummyPaddedOracle,
    ImageSummarizationOracle,
    ModularOracle,
    MovieRecommendationOracle,
    RevenueOracle,
    RevenueWeights,
    SimilarityMatrix,
    cosine_similarity_matrix,
    cut_value,
    image_summarization_value,
    inner_product_similarity,
    movie_recommendation_value,
    pad_with_dummies,
    revenue_value,
)
from oracle import EvalBatch, InvalidInputError, ObjectiveContractError, evaluate_batch


def _star(n_leaves: int = 3) -> CutGraph:
    return CutGraph.from_edges(n_leaves + 1, [(0, leaf) for leaf in range(1, n_leaves + 1)])


def _bundled_oracles(n: int, seed: int):
    rng = np.random.default_rng(seed)
    graph = assign_uniform_weights(gen_erdos_renyi(n, 0.3, seed), seed + 1)
    vectors = rng.random((n, 8))
    ratings = rng.integers(0, 6, size=(n, 10)).astype(float)
    return {
        "cut": CutOracle(graph),
        "image": ImageSummarizationOracle(cosine_similarity_matrix(vectors)),
        "movie": MovieRecommendationOracle(inner_product_similarity(ratings)),
        "revenue": RevenueOracle(RevenueWeights.from_graph(graph)),
        "revenue_all": RevenueOracle(RevenueWeights.from_graph(graph), include_selected=True),
    }


# ========== カット ==========

def test_cut_triangle(triangle):
    assert cut_value(triangle, {0}) == 2.0


def test_cut_empty_and_full(k4):
    assert cut_value(k4, set()) == 0.0
    assert cut_value(k4, set(range(4))) == 0.0


def test_cut_weighted_path():
    path = CutGraph.from_edges(3, [(0, 1, 0.5), (1, 2, 2.0)])
    assert cut_value(path, {1}) == 2.5


def test_directed_edges_count_either_direction():
    graph = CutGraph.from_edges(3, [(0, 1, 1.0), (1, 0, 2.0), (2, 1, 4.0)], directed=True)
    assert cut_value(graph, {1}) == 7.0
    assert CutOracle(graph).peek({1}) == 7.0


def test_cut_batched_matches_pure(k4):
    graph = assign_uniform_weights(gen_erdos_renyi(20, 0.4, 3), 4)
    oracle = CutOracle(graph)
    rng = np.random.default_rng(0)
    sets = [frozenset(np.flatnonzero(rng.random(20) < 0.5).tolist()) for _ in range(50)]
    batched = evaluate_batch(oracle, EvalBatch(sets))
    for S, v in zip(sets, batched):
        assert v == pytest.approx(cut_value(graph, S), abs=1e-9)


def test_cut_graph_rejects_bad_edges():
    with pytest.raises(InvalidInputError):
        CutGraph.from_edges(2, [(0, 0)])
    with pytest.raises(InvalidInputError):
        CutGraph.from_edges(2, [(0, 2)])
    with pytest.raises(ObjectiveContractError):
        CutGraph.from_edges(2, [(0, 1, -1.0)])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), p=st.floats(0.0, 1.0))
def test_cut_complement_symmetry(seed, p):
    graph = assign_uniform_weights(gen_erdos_renyi(15, p, seed), seed + 1)
    rng = np.random.default_rng(seed)
    S = set(np.flatnonzero(rng.random(15) < 0.5).tolist())
    complement = set(range(15)) - S
    assert cut_value(graph, S) == pytest.approx(cut_value(graph, complement), abs=1e-12)


# ========== 画像要約・映画推薦 ==========

def test_image_empty_is_zero():
    assert image_summarization_value(SimilarityMatrix(np.ones((3, 3))), set()) == 0.0


def test_image_constant_matrix():
    assert image_summarization_value(SimilarityMatrix(np.ones((3, 3))), {1}) == pytest.approx(8.0 / 3.0)


def test_image_identity_matrix():
    assert image_summarization_value(SimilarityMatrix(np.eye(3)), {0}) == pytest.approx(2.0 / 3.0)


def test_image_requires_symmetric():
    s = np.array([[1.0, 0.2], [0.5, 1.0]])
    with pytest.raises(ObjectiveContractError):
        ImageSummarizationOracle(SimilarityMatrix(s))


def test_cosine_rejects_zero_vector():
    with pytest.raises(ObjectiveContractError):
        cosine_similarity_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_cosine_unit_diagonal():
    s = cosine_similarity_matrix(np.random.default_rng(0).random((5, 4)))
    assert np.allclose(np.diag(s.s), 1.0)
    assert s.is_symmetric()


def test_movie_empty_is_zero():
    assert movie_recommendation_value(SimilarityMatrix(np.ones((3, 3))), set()) == 0.0


def test_movie_singleton():
    s = np.array([[2.0, 1.0, 0.5], [1.0, 3.0, 0.0], [0.5, 0.0, 1.0]])
    expected = s[0].sum() - 0.95 * s[0, 0]
    assert movie_recommendation_value(SimilarityMatrix(s), {0}) == pytest.approx(expected)


def test_movie_constant_pair():
    assert movie_recommendation_value(SimilarityMatrix(np.ones((3, 3))), {0, 1}) == pytest.approx(2.2)


def test_movie_clamped_at_zero():
    s = np.full((2, 2), 1.0)
    assert movie_recommendation_value(SimilarityMatrix(s), {0, 1}, lam=5.0) == 0.0


def test_ratings_inner_product():
    assert np.array_equal(inner_product_similarity(np.eye(2)).s, np.eye(2))
    assert np.array_equal(inner_product_similarity(np.ones((2, 2))).s, np.full((2, 2), 2.0))


# ========== 収益 ==========

def test_revenue_empty_and_full():
    W = RevenueWeights.from_graph(_star())
    assert revenue_value(W, set()) == 0.0
    assert revenue_value(W, set(range(4))) == 0.0


def test_revenue_star_center():
    assert revenue_value(RevenueWeights.from_graph(_star()), {0}) == pytest.approx(3.0)


def test_revenue_excluding_selected_is_not_monotone():
    # 葉2つを選んだ後に中心を加えると中心の寄与が消える
    W = RevenueWeights.from_graph(_star())
    assert revenue_value(W, {0, 1, 2}) < revenue_value(W, {1, 2})


def test_revenue_including_selected_is_monotone():
    oracle = _bundled_oracles(30, 7)["revenue_all"]
    rng = np.random.default_rng(1)
    for _ in range(500):
        S = set(np.flatnonzero(rng.random(30) < 0.3).tolist())
        outside = [a for a in range(30) if a not in S]
        if not outside:
            continue
        a = int(rng.choice(outside))
        assert oracle.peek(S | {a}) >= oracle.peek(S) - 1e-12


def test_revenue_weights_validation():
    with pytest.raises(ObjectiveContractError):
        RevenueWeights(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ObjectiveContractError):
        RevenueWeights(np.array([[1.0, 0.0], [0.0, 0.0]]))


# ========== 共通の性質 ==========

@pytest.mark.parametrize("name", ["cut", "image", "movie", "revenue", "revenue_all"])
def test_diminishing_returns(name):
    n = 30
    oracle = _bundled_oracles(n, 11)[name]
    rng = np.random.default_rng(5)
    for _ in range(1000):
        T = set(np.flatnonzero(rng.random(n) < 0.4).tolist())
        S = {a for a in T if rng.random() < 0.5}
        outside = [a for a in range(n) if a not in T]
        if not outside:
            continue
        a = int(rng.choice(outside))
        gain_S = oracle.peek(S | {a}) - oracle.peek(S)
        gain_T = oracle.peek(T | {a}) - oracle.peek(T)
        assert gain_S >= gain_T - 1e-9


@pytest.mark.parametrize("name", ["cut", "image", "movie", "revenue", "revenue_all"])
def test_nonnegative_values(name):
    n = 25
    oracle = _bundled_oracles(n, 3)[name]
    rng = np.random.default_rng(9)
    sets = [set(np.flatnonzero(rng.random(n) < rng.random()).tolist()) for _ in range(200)]
    assert min(evaluate_batch(oracle, EvalBatch(sets))) >= 0.0


# ========== ダミー ==========

def test_pad_appends_dummies():
    oracle = ModularOracle([1.0, 2.0, 3.0, 4.0, 5.0])
    padded = pad_with_dummies(oracle, 5, current_size=3)
    assert isinstance(padded, DummyPaddedOracle)
    assert padded.dummy_ids == [5, 6]
    assert padded.peek({1, 5, 6}) == oracle.peek({1})


def test_pad_to_same_size_is_unchanged():
    oracle = ModularOracle([1.0, 2.0])
    assert pad_with_dummies(oracle, 2) is oracle


def test_pad_rejects_shrinking():
    with pytest.raises(InvalidInputError):
        pad_with_dummies(ModularOracle([1.0, 2.0, 3.0]), 2)


def test_padded_oracle_shares_ledger():
    oracle = ModularOracle([1.0, 2.0])
    padded = pad_with_dummies(oracle, 4)
    evaluate_batch(padded, EvalBatch([{0, 2}, {3}]))
    assert oracle.ledger.adaptive_rounds == 1


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), extra=st.integers(1, 6))
def test_dummies_never_change_value(seed, extra):
    oracle = CutOracle(assign_uniform_weights(gen_erdos_renyi(12, 0.5, seed), seed))
    padded = DummyPaddedOracle(oracle, extra)
    rng = np.random.default_rng(seed)
    S = frozenset(np.flatnonzero(rng.random(12) < 0.5).tolist())
    D = frozenset(d for d in padded.dummy_ids if rng.random() < 0.5)
    values = evaluate_batch(padded, EvalBatch([S, S | D]))
    assert values[0] == values[1]
    assert math.isclose(values[0], oracle.peek(S), abs_tol=1e-12)
