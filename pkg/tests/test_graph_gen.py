import numpy as np
import pytest
from scipy.sparse.csgraph import connected_components

from graph_gen import (
    GraphGenSpec,
    assign_uniform_weights,
    gen_barabasi_albert,
    gen_configuration_model,
    gen_erdos_renyi,
    gen_sbm,
    generate,
    sample_power_law_degrees,
)
from objectives import CutGraph
from oracle import InvalidInputError


def _assert_simple(graph: CutGraph):
    assert np.all(graph.u != graph.v)
    pairs = set(zip(graph.u.tolist(), graph.v.tolist()))
    assert len(pairs) == graph.num_edges
    assert all(a < b for a, b in pairs)


def test_erdos_renyi_extremes():
    assert gen_erdos_renyi(30, 0.0, 1).num_edges == 0
    assert gen_erdos_renyi(30, 1.0, 1).num_edges == 30 * 29 // 2


def test_erdos_renyi_edge_count_concentrates():
    graph = gen_erdos_renyi(1000, 0.5, 0)
    assert abs(graph.num_edges - 249750) <= 3 * 353.4
    _assert_simple(graph)


def test_erdos_renyi_rejects_bad_p():
    with pytest.raises(InvalidInputError):
        gen_erdos_renyi(10, 1.5, 0)


def test_sbm_empty_when_p_in_zero():
    assert gen_sbm(3, 5, 10, 0.0, 0).num_edges == 0


def test_sbm_two_cliques():
    graph = gen_sbm(2, 4, 6, 1.0, 3)
    sizes = np.bincount(graph.communities)
    assert graph.num_edges == sum(s * (s - 1) // 2 for s in sizes)
    assert np.all(graph.communities[graph.u] == graph.communities[graph.v])


def test_sbm_components_stay_inside_clusters():
    graph = gen_sbm(7, 30, 120, 0.8, 11)
    sizes = np.bincount(graph.communities)
    assert len(sizes) == 7
    assert sizes.min() >= 30 and sizes.max() <= 120
    assert np.all(graph.communities[graph.u] == graph.communities[graph.v])
    _, labels = connected_components(graph.adjacency(), directed=False)
    for component in np.unique(labels):
        assert len(np.unique(graph.communities[labels == component])) == 1


def test_barabasi_albert_tree_when_m_is_one():
    graph = gen_barabasi_albert(50, 1, 2)
    assert graph.num_edges == 49
    n_components, _ = connected_components(graph.adjacency(), directed=False)
    assert n_components == 1


@pytest.mark.parametrize("n,m", [(10, 3), (40, 7), (100, 20)])
def test_barabasi_albert_edge_count(n, m):
    graph = gen_barabasi_albert(n, m, 5)
    assert graph.num_edges == m * (n - m)
    # 初期ノード同士は結ばれない
    assert not np.any((graph.u < m) & (graph.v < m))
    _assert_simple(graph)


def test_barabasi_albert_hubs():
    hits = 0
    for seed in range(20):
        degrees = gen_barabasi_albert(500, 100, seed).degrees()
        hits += degrees.max() >= 2 * np.median(degrees)
    assert hits >= 19


def test_barabasi_albert_rejects_m_ge_n():
    with pytest.raises(InvalidInputError):
        gen_barabasi_albert(5, 5, 0)


def test_configuration_perfect_matching():
    graph = gen_configuration_model(20, 2.0, 4, degrees=[1] * 20)
    assert graph.num_edges == 10
    assert np.all(graph.degrees() == 1)


def test_power_law_degree_sum_is_even():
    rng = np.random.default_rng(0)
    for _ in range(20):
        degrees = sample_power_law_degrees(101, 2.0, rng)
        assert degrees.sum() % 2 == 0
        assert degrees.min() >= 1 and degrees.max() <= 100


def test_configuration_tail_is_monotone():
    graph = gen_configuration_model(500, 2.0, 8)
    _assert_simple(graph)
    degrees = graph.degrees()
    tail = [np.mean(degrees >= d) for d in range(1, degrees.max() + 1)]
    assert all(a >= b for a, b in zip(tail, tail[1:]))
    assert degrees.max() > 5 * np.median(degrees)


def test_configuration_rejects_small_exponent():
    with pytest.raises(InvalidInputError):
        gen_configuration_model(10, 1.0, 0)


def test_uniform_weights():
    empty = assign_uniform_weights(gen_erdos_renyi(5, 0.0, 0), 1)
    assert empty.num_edges == 0
    graph = assign_uniform_weights(gen_erdos_renyi(250, 0.5, 1), 2)
    assert graph.num_edges >= 10 ** 4
    assert np.all((graph.w > 0) & (graph.w < 1))
    assert abs(graph.w.mean() - 0.5) <= 0.02


@pytest.mark.parametrize("model", ["erdos_renyi", "sbm", "barabasi_albert", "configuration"])
def test_generate_is_deterministic(model):
    spec = GraphGenSpec(model=model, n=120, p=0.3, num_clusters=3, size_lo=10, size_hi=20,
                        m=4, seed=42, weighted=True)
    first, second = generate(spec), generate(spec)
    assert first.n == second.n
    assert np.array_equal(first.u, second.u)
    assert np.array_equal(first.v, second.v)
    assert np.array_equal(first.w, second.w)
    _assert_simple(first)


def test_generate_rejects_unknown_model():
    with pytest.raises(InvalidInputError):
        generate(GraphGenSpec(model="lattice"))
