import logging
from functools import cached_property
from typing import Literal, Mapping

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveInt, model_validator

from regdiff.config import COLUMN_SUM_TOL, EIGEN_TOL, PERRON_MAX_ITER, PERRON_TOL
from regdiff.errors import (
    AsymmetricGraph,
    ColumnSumViolation,
    NoConvergence,
    NoSelfLoop,
    NotStronglyConnected,
    SparsityViolation,
)

logger = logging.getLogger(__name__)

WeightingRule = Literal["uniform-averaging", "metropolis", "explicit-weights"]


class Graph(BaseModel):
    """
    Directed communication graph. An edge (l, k) means agent l sends to agent k,
    i.e. l belongs to the neighborhood of k. Self-loops are edges (k, k).
    """

    model_config = ConfigDict(frozen=True)

    n_agents: PositiveInt
    edges: frozenset[tuple[int, int]]

    @model_validator(mode="after")
    def _check_indices(self):
        for source, sink in self.edges:
            if not (0 <= source < self.n_agents and 0 <= sink < self.n_agents):
                raise ValueError(
                    f"Edge ({source}, {sink}) refers to an agent outside 0..{self.n_agents - 1}"
                )
        return self

    @classmethod
    def from_networkx(cls, graph: nx.Graph, self_loops: bool = True) -> "Graph":
        """
        Build a Graph from a networkx graph whose nodes are 0..n-1.

        Undirected edges are expanded in both directions.

        Args:
            graph (nx.Graph): The source graph (directed or undirected).
            self_loops (bool): Whether to add a self-loop at every agent.

        Returns:
            Graph: The equivalent directed edge set.
        """
        n = graph.number_of_nodes()
        edges = set()
        for source, sink in graph.edges():
            edges.add((int(source), int(sink)))
            if not graph.is_directed():
                edges.add((int(sink), int(source)))
        if self_loops:
            edges.update((k, k) for k in range(n))
        return cls(n_agents=n, edges=frozenset(edges))

    @classmethod
    def complete(cls, n: int, self_loops: bool = True) -> "Graph":
        return cls.from_networkx(nx.complete_graph(n), self_loops)

    @classmethod
    def ring(cls, n: int, self_loops: bool = True) -> "Graph":
        return cls.from_networkx(nx.cycle_graph(n), self_loops)

    @classmethod
    def line(cls, n: int, self_loops: bool = True) -> "Graph":
        return cls.from_networkx(nx.path_graph(n), self_loops)

    @classmethod
    def star(cls, n: int, self_loops: bool = True) -> "Graph":
        return cls.from_networkx(nx.star_graph(n - 1), self_loops)

    @classmethod
    def small_world(
        cls, n: int, k: int = 4, p: float = 0.3, seed: int = 0, self_loops: bool = True
    ) -> "Graph":
        # networkx retries the rewiring until the graph is connected
        graph = nx.connected_watts_strogatz_graph(n, k, p, tries=1000, seed=seed)
        return cls.from_networkx(graph, self_loops)

    def neighbors(self, k: int) -> list[int]:
        """
        Get the neighborhood N_k (agents sending to k), in ascending order.
        """
        return sorted(source for source, sink in self.edges if sink == k)

    def to_digraph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n_agents))
        graph.add_edges_from(self.edges)
        return graph

    def is_strongly_connected(self) -> bool:
        return nx.is_strongly_connected(self.to_digraph())

    def is_symmetric(self) -> bool:
        return all((sink, source) in self.edges for source, sink in self.edges)


class CombinationMatrix:
    """
    Left-stochastic combination matrix A = [a_lk]; column k holds the weights
    agent k assigns to its neighbors. The Perron vector is computed lazily and cached.
    """

    def __init__(self, weights: np.ndarray):
        """
        Initialize the CombinationMatrix from a dense array of weights.

        Args:
            weights (np.ndarray): Square array with nonnegative entries and unit column sums.

        Raises:
            ValueError: If the array is not square or has negative entries.
            ColumnSumViolation: If a column sum is off by more than the tolerance.
        """
        matrix = np.array(weights, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Combination matrix must be square, got shape {matrix.shape}")
        if np.any(matrix < 0):
            raise ValueError("Combination weights must be nonnegative")

        # Check left-stochasticity
        deviation = np.max(np.abs(matrix.sum(axis=0) - 1.0))
        if deviation > COLUMN_SUM_TOL:
            raise ColumnSumViolation(
                f"Column sums deviate from 1 by {deviation:.3e} (tolerance {COLUMN_SUM_TOL:.0e})"
            )

        matrix.setflags(write=False)
        self._weights = matrix

    @classmethod
    def identity(cls, n: int) -> "CombinationMatrix":
        """
        The combination matrix of n agents that never exchange iterates.
        """
        return cls(np.eye(n))

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def n(self) -> int:
        return self._weights.shape[0]

    @cached_property
    def perron(self) -> np.ndarray:
        return perron_vector(self)

    def __repr__(self) -> str:
        return f"CombinationMatrix(n={self.n})"


def build_matrix(
    graph: Graph,
    rule: WeightingRule,
    weights: Mapping[tuple[int, int], float] | None = None,
) -> CombinationMatrix:
    """
    Build a combination matrix over a graph with the requested weighting rule.

    Args:
        graph (Graph): The communication graph.
        rule (WeightingRule): "uniform-averaging", "metropolis" or "explicit-weights".
        weights (Mapping[tuple[int, int], float], optional): Explicit weights a_lk keyed by
            edge (l, k); required for "explicit-weights", where they are validated, not modified.

    Returns:
        CombinationMatrix: A left-stochastic primitive matrix respecting the graph sparsity.

    Raises:
        NotStronglyConnected: If the graph has no directed path between some ordered pair.
        ColumnSumViolation: If explicit weights do not sum to one per column.
        NoSelfLoop: If no agent ends up with a positive self-weight.
        AsymmetricGraph: If metropolis weights are requested on a directed graph.
        SparsityViolation: If an explicit weight is placed on a missing edge.

    Example:
        >>> A = build_matrix(Graph.ring(4), "metropolis")
        >>> A.perron
    """
    if not graph.is_strongly_connected():
        raise NotStronglyConnected(
            f"Graph with {graph.n_agents} agents is not strongly connected"
        )

    n = graph.n_agents
    matrix = np.zeros((n, n))
    match rule:
        case "uniform-averaging":
            for k in range(n):
                neighborhood = graph.neighbors(k)
                for source in neighborhood:
                    matrix[source, k] = 1.0 / len(neighborhood)
        case "metropolis":
            if not graph.is_symmetric():
                raise AsymmetricGraph("Metropolis weights require an undirected graph")
            degrees = [len([l for l in graph.neighbors(k) if l != k]) for k in range(n)]
            for k in range(n):
                for source in graph.neighbors(k):
                    if source != k:
                        matrix[source, k] = 1.0 / (1 + max(degrees[k], degrees[source]))
                # The self-weight absorbs the residual
                matrix[k, k] = 1.0 - matrix[:, k].sum()
        case "explicit-weights":
            if not weights:
                raise ValueError("Explicit weights are required for the explicit-weights rule")
            for (source, sink), value in weights.items():
                if (source, sink) not in graph.edges:
                    raise SparsityViolation(
                        f"Weight given for ({source}, {sink}) which is not an edge of the graph"
                    )
                matrix[source, sink] = value
        case _:
            raise ValueError(f"Unknown weighting rule: {rule}")

    combination = CombinationMatrix(matrix)

    # Primitivity: strong connectivity over positive weights plus one positive self-weight
    if not np.any(np.diag(combination.weights) > 0):
        raise NoSelfLoop("No agent has a positive self-weight")
    positive = Graph(
        n_agents=n,
        edges=frozenset(zip(*map(lambda a: a.tolist(), np.nonzero(combination.weights)))),
    )
    if not positive.is_strongly_connected():
        raise NotStronglyConnected("Positive weights do not form a strongly connected graph")

    logger.debug(f"Built {rule} combination matrix for {n} agents")
    return combination


def perron_vector(A: CombinationMatrix) -> np.ndarray:
    """
    Compute the Perron eigenvector p of A (A p = p, sum p = 1, p > 0) by power iteration.

    Args:
        A (CombinationMatrix): A valid combination matrix.

    Returns:
        np.ndarray: The normalized Perron vector.

    Raises:
        NoConvergence: If the iteration cap is hit or the limit is not strictly positive.
    """
    n = A.n
    if n == 1:
        return np.ones(1)

    p = np.full(n, 1.0 / n)
    for _ in range(PERRON_MAX_ITER):
        candidate = A.weights @ p
        candidate /= candidate.sum()
        converged = np.max(np.abs(candidate - p)) <= PERRON_TOL * np.max(np.abs(candidate))
        p = candidate
        if converged:
            break
    else:
        raise NoConvergence(
            f"Power iteration did not converge in {PERRON_MAX_ITER} iterations; "
            "the matrix may be nearly reducible"
        )

    if np.min(p) <= 0:
        raise NoConvergence("Perron vector has non-positive entries; matrix is not primitive")
    return p


def second_eigenvalue_modulus(A: CombinationMatrix) -> float:
    """
    Estimate |lambda_2(A)|, the mixing rate of the network.

    Power iteration runs on the deflated operator A^T - 1 p^T, whose spectrum is that of A
    with the Perron eigenvalue replaced by zero. Each step fits a degree-two polynomial over
    the Krylov vectors (x, Bx, B^2 x) so that complex-conjugate or sign-alternating dominant
    pairs still yield a stable modulus.

    Args:
        A (CombinationMatrix): A valid combination matrix.

    Returns:
        float: The modulus of the second largest eigenvalue, in [0, 1).

    Raises:
        NoConvergence: If the estimate does not settle within the iteration cap.
    """
    n = A.n
    if n == 1:
        return 0.0

    p = A.perron
    weights_t = A.weights.T

    def deflated(x: np.ndarray) -> np.ndarray:
        return weights_t @ x - np.dot(p, x)

    x = deflated(np.random.default_rng(0).standard_normal(n))
    estimate = None
    for _ in range(PERRON_MAX_ITER):
        norm = np.linalg.norm(x)
        if norm == 0.0:
            return 0.0
        x = x / norm
        y = deflated(x)
        if np.linalg.norm(y) <= 1e-14:
            return 0.0
        z = deflated(y)

        current = _dominant_modulus(x, y, z)
        if estimate is not None and abs(current - estimate) <= EIGEN_TOL * max(1.0, current):
            return float(current)
        estimate = current
        x = y

    raise NoConvergence(f"Second eigenvalue estimate did not settle in {PERRON_MAX_ITER} iterations")


def _dominant_modulus(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> float:
    basis = np.column_stack([x, y])
    singular = np.linalg.svd(basis, compute_uv=False)

    # Collinear Krylov vectors: a single real dominant eigenvalue
    if singular[-1] <= 1e-6 * singular[0]:
        return float(np.linalg.norm(y))

    coefficients, *_ = np.linalg.lstsq(basis, -z, rcond=None)
    roots = np.roots([1.0, coefficients[1], coefficients[0]])
    return float(np.max(np.abs(roots)))
