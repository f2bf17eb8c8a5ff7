import networkx as nx
import numpy as np
import pytest

from regdiff.errors import (
    AsymmetricGraph,
    ColumnSumViolation,
    NoSelfLoop,
    NotStronglyConnected,
    SparsityViolation,
)
from regdiff.network.topology import (
    CombinationMatrix,
    Graph,
    build_matrix,
    perron_vector,
    second_eigenvalue_modulus,
)


def directed_cycle(n: int, self_loops: bool = True) -> Graph:
    return Graph.from_networkx(nx.cycle_graph(n, create_using=nx.DiGraph), self_loops)


def test_ring_neighborhoods_include_self():
    graph = Graph.ring(5)
    assert graph.neighbors(0) == [0, 1, 4]
    assert graph.is_symmetric()
    assert graph.is_strongly_connected()


def test_star_and_line_are_connected():
    assert Graph.star(6).neighbors(0) == [0, 1, 2, 3, 4, 5]
    assert Graph.line(4).neighbors(3) == [2, 3]


def test_small_world_is_deterministic_under_seed():
    first = Graph.small_world(12, k=4, p=0.3, seed=5)
    second = Graph.small_world(12, k=4, p=0.3, seed=5)
    assert first.edges == second.edges
    assert first.is_strongly_connected()


def test_edge_outside_range_is_rejected():
    with pytest.raises(ValueError):
        Graph(n_agents=2, edges=frozenset({(0, 2)}))


@pytest.mark.parametrize("rule", ["uniform-averaging", "metropolis"])
@pytest.mark.parametrize(
    "graph",
    [Graph.ring(6), Graph.complete(4), Graph.star(5), Graph.line(5), Graph.small_world(10, seed=1)],
    ids=["ring", "complete", "star", "line", "small_world"],
)
def test_matrix_is_left_stochastic_with_graph_sparsity(graph, rule):
    A = build_matrix(graph, rule)
    weights = A.weights
    np.testing.assert_allclose(weights.sum(axis=0), 1.0, atol=1e-12)
    assert np.all(weights >= 0)
    for source, sink in zip(*np.nonzero(weights)):
        assert (int(source), int(sink)) in graph.edges


def test_uniform_averaging_weights():
    A = build_matrix(Graph.ring(4), "uniform-averaging")
    np.testing.assert_allclose(A.weights[:, 0], [1 / 3, 1 / 3, 0.0, 1 / 3])


def test_metropolis_is_doubly_stochastic():
    A = build_matrix(Graph.star(5), "metropolis")
    np.testing.assert_allclose(A.weights.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(A.perron, np.full(5, 0.2), atol=1e-12)


@pytest.mark.parametrize("n", [2, 5, 9])
def test_perron_invariants_on_directed_graph(n):
    A = build_matrix(directed_cycle(n), "uniform-averaging")
    p = perron_vector(A)
    np.testing.assert_allclose(A.weights @ p, p, atol=1e-12)
    assert np.all(p > 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_perron_of_asymmetric_weights():
    # Column k holds the weights agent k assigns; the self-weights differ per agent
    weights = np.array(
        [
            [0.5, 0.2, 0.3],
            [0.25, 0.8, 0.0],
            [0.25, 0.0, 0.7],
        ]
    )
    A = CombinationMatrix(weights)
    p = A.perron
    np.testing.assert_allclose(weights @ p, p, atol=1e-12)
    eigenvalues, eigenvectors = np.linalg.eig(weights)
    reference = np.real(eigenvectors[:, np.argmax(np.real(eigenvalues))])
    np.testing.assert_allclose(p, reference / reference.sum(), atol=1e-10)


def test_single_agent_perron():
    A = build_matrix(Graph.complete(1), "uniform-averaging")
    np.testing.assert_array_equal(A.perron, [1.0])
    assert second_eigenvalue_modulus(A) == 0.0


def test_disconnected_graph_is_rejected():
    graph = Graph(n_agents=4, edges=frozenset({(0, 1), (1, 0), (2, 3), (3, 2)} | {(k, k) for k in range(4)}))
    with pytest.raises(NotStronglyConnected):
        build_matrix(graph, "uniform-averaging")


def test_metropolis_needs_symmetric_graph():
    with pytest.raises(AsymmetricGraph):
        build_matrix(directed_cycle(4), "metropolis")


def test_missing_self_loops_are_rejected():
    with pytest.raises(NoSelfLoop):
        build_matrix(directed_cycle(4, self_loops=False), "uniform-averaging")


def test_explicit_weight_on_missing_edge():
    weights = {(0, 0): 0.5, (1, 0): 0.5, (1, 1): 0.5, (0, 1): 0.25, (2, 1): 0.25, (2, 2): 1.0}
    graph = Graph.line(3)
    with pytest.raises(SparsityViolation):
        build_matrix(graph, "explicit-weights", {**weights, (0, 2): 0.0})


def test_explicit_weights_must_sum_to_one():
    weights = {(0, 0): 0.5, (1, 0): 0.4, (1, 1): 0.5, (0, 1): 0.5}
    with pytest.raises(ColumnSumViolation):
        build_matrix(Graph.complete(2), "explicit-weights", weights)


def test_explicit_weights_are_kept():
    weights = {(0, 0): 0.7, (1, 0): 0.3, (1, 1): 0.6, (0, 1): 0.4}
    A = build_matrix(Graph.complete(2), "explicit-weights", weights)
    np.testing.assert_array_equal(A.weights, [[0.7, 0.4], [0.3, 0.6]])


def test_combination_matrix_is_read_only(ring_matrix):
    with pytest.raises(ValueError):
        ring_matrix.weights[0, 0] = 1.0


def _reference_second_modulus(A: CombinationMatrix) -> float:
    moduli = np.sort(np.abs(np.linalg.eigvals(A.weights)))[::-1]
    return float(moduli[1])


@pytest.mark.parametrize(
    "A",
    [
        build_matrix(Graph.ring(5), "metropolis"),
        build_matrix(directed_cycle(5), "uniform-averaging"),
        build_matrix(Graph.small_world(10, seed=3), "metropolis"),
        build_matrix(Graph.star(6), "uniform-averaging"),
    ],
    ids=["ring", "directed_cycle", "small_world", "star"],
)
def test_second_eigenvalue_matches_dense_solver(A):
    assert second_eigenvalue_modulus(A) == pytest.approx(_reference_second_modulus(A), abs=1e-6)


def test_complete_graph_mixes_in_one_step():
    A = build_matrix(Graph.complete(4), "uniform-averaging")
    assert second_eigenvalue_modulus(A) == pytest.approx(0.0, abs=1e-8)
