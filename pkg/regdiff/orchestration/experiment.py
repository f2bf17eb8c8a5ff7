import logging
import math
from functools import cached_property

import numpy as np
from pydantic import BaseModel

from regdiff.config import EVALUATION_SEED
from regdiff.errors import (
    AsymmetricGraph,
    ColumnSumViolation,
    NoSelfLoop,
    NotStronglyConnected,
    SparsityViolation,
    ValidationFailure,
)
from regdiff.engine.diffusion import contraction_factor
from regdiff.engine.models import AgentSpec, DiffusionConfig, Variant
from regdiff.network.topology import CombinationMatrix, Graph, build_matrix
from regdiff.orchestration.models import (
    AgentGroupSpec,
    ExperimentConfig,
    ExperimentVariant,
    LogisticSpec,
    QuadraticSpec,
    RandomGroupL1,
)
from regdiff.risks.base import Curvature, SmoothRisk, ZeroRisk, aggregate_curvature
from regdiff.risks.data import DataModel, SampleBatch, make_template
from regdiff.risks.logistic import LogisticRisk
from regdiff.risks.quadratic import QuadraticRisk
from regdiff.smoothing.regularizers import GroupL1, Regularizer, ZeroRegularizer
from regdiff.solvers.reference import OracleSolution, solve_nonsmooth, solve_smoothed

logger = logging.getLogger(__name__)


class ExperimentProfile(BaseModel):
    """
    The realized random draws of an experiment: its graph, weights and per-agent noise.
    """

    n_agents: int
    edges: list[tuple[int, int]]
    weights: list[list[float]]
    perron: list[float]
    roles: list[str]
    noise_sigmas: list[float]


class Experiment:
    """
    The network, agents, test sets and reference points described by an ExperimentConfig.

    Every random draw comes from the problem seed, so two Experiments built from equal
    configurations are identical.
    """

    def __init__(self, config: ExperimentConfig):
        """
        Initialize the Experiment from a validated configuration.

        Args:
            config (ExperimentConfig): The configuration to build.

        Raises:
            ValidationFailure: If the network block does not yield a strongly connected graph
                with a valid combination matrix; the message names the offending field.

        Example:
            >>> experiment = Experiment(load_config("preset:division-of-labor"))
            >>> experiment.matrix.perron
        """
        self._config = config
        self._graph, self._matrix = self._build_network()

        # Draw the agents and their test sets from the problem seed
        rng = np.random.default_rng(config.problem.seed)
        self._data_models: list[DataModel | None] = []
        self._noise_sigmas: list[float] = []
        self._agents = self._build_agents(rng)
        self._test_sets = self._build_test_sets()
        self._curvature = aggregate_curvature([agent.risk for agent in self._agents], self.p)
        self._smoothed: dict[tuple[float, float], OracleSolution] = {}

        logger.info(
            f"Experiment {config.name!r}: {self._matrix.n} agents, dimension "
            f"{config.problem.dimension}, lambda_L={self._curvature.lower:.4g}, "
            f"lambda_U={self._curvature.upper:.4g}"
        )
        for mu in config.algorithm.mu_values():
            self.contraction_factor(mu)

    def _build_network(self) -> tuple[Graph, CombinationMatrix]:
        network = self._config.network
        graph_field = "network.edges" if network.topology == "edges" else "network.topology"
        weights = {(source, sink): value for source, sink, value in network.weights}
        try:
            graph = self._build_graph()
            return graph, build_matrix(graph, network.rule, weights or None)
        except (NotStronglyConnected, AsymmetricGraph) as e:
            raise ValidationFailure(f"{graph_field}: {e}") from e
        except (ColumnSumViolation, SparsityViolation) as e:
            raise ValidationFailure(f"network.weights: {e}") from e
        except NoSelfLoop as e:
            field = "network.weights" if network.rule == "explicit-weights" else "network.self_loops"
            raise ValidationFailure(f"{field}: {e}") from e

    def _build_graph(self) -> Graph:
        network = self._config.network
        n = network.n_agents
        match network.topology:
            case "complete":
                return Graph.complete(n, network.self_loops)
            case "ring":
                return Graph.ring(n, network.self_loops)
            case "line":
                return Graph.line(n, network.self_loops)
            case "star":
                return Graph.star(n, network.self_loops)
            case "small_world":
                return Graph.small_world(
                    n, network.degree, network.rewire, network.seed, network.self_loops
                )
            case "edges":
                edges = set(network.edges)
                if network.self_loops:
                    edges.update((k, k) for k in range(n))
                return Graph(n_agents=n, edges=frozenset(edges))

    def _noise_sigma(self, group: AgentGroupSpec, rng: np.random.Generator) -> float:
        if group.noise_sigma is not None:
            return group.noise_sigma
        low, high = self._config.problem.noise_profile
        return float(math.exp(rng.uniform(math.log(low), math.log(high))))

    def _build_risk(
        self, group: AgentGroupSpec, sigma: float, data: DataModel | None, rng: np.random.Generator
    ) -> SmoothRisk:
        dimension = self._config.problem.dimension
        match group.risk:
            case LogisticSpec(rho2=rho2):
                return LogisticRisk(
                    rho2,
                    data,
                    evaluation_size=self._config.problem.evaluation_size,
                    evaluation_seed=EVALUATION_SEED,
                )
            case QuadraticSpec() as spec:
                if spec.hessian is not None:
                    hessian = np.array(spec.hessian, dtype=float)
                else:
                    basis, _ = np.linalg.qr(rng.standard_normal((dimension, dimension)))
                    eigenvalues = rng.uniform(*spec.eigen_range, size=dimension)
                    hessian = (basis * eigenvalues) @ basis.T
                    hessian = 0.5 * (hessian + hessian.T)
                if spec.linear is not None:
                    linear = np.array(spec.linear, dtype=float)
                else:
                    linear = spec.linear_scale * rng.standard_normal(dimension)
                return QuadraticRisk(hessian, linear, spec.noise, sigma)
            case _:
                return ZeroRisk(dimension)

    def _build_regularizer(self, group: AgentGroupSpec, rng: np.random.Generator) -> Regularizer:
        match group.regularizer:
            case RandomGroupL1(rho=rho, count=count):
                problem = self._config.problem
                sparse = np.arange(problem.informative, problem.dimension)
                indices = np.sort(rng.choice(sparse, size=count, replace=False))
                return GroupL1(rho=rho, indices=tuple(int(i) for i in indices))
            case regularizer:
                return regularizer

    def _build_agents(self, rng: np.random.Generator) -> list[AgentSpec]:
        problem = self._config.problem
        template = None
        if problem.informative is not None:
            template = make_template(problem.dimension, problem.informative)

        agents = []
        for group in self._config.agents:
            for _ in range(group.count):
                sigma = self._noise_sigma(group, rng)
                data = DataModel(template, sigma) if template is not None else None
                self._data_models.append(data)
                self._noise_sigmas.append(sigma)
                agents.append(
                    AgentSpec(
                        risk=self._build_risk(group, sigma, data, rng),
                        regularizer=self._build_regularizer(group, rng),
                        role=group.role,
                    )
                )
        return agents

    def _build_test_sets(self) -> list[SampleBatch] | None:
        size = self._config.metrics.test_size
        if size == 0:
            return None
        rng = np.random.default_rng([self._config.problem.seed, 1])
        return [data.draw_batch(rng, size) for data in self._data_models]

    @property
    def config(self) -> ExperimentConfig:
        return self._config

    @property
    def graph(self) -> Graph:
        return self._graph

    @property
    def matrix(self) -> CombinationMatrix:
        return self._matrix

    @property
    def p(self) -> np.ndarray:
        return self._matrix.perron

    @property
    def agents(self) -> list[AgentSpec]:
        return self._agents

    @property
    def test_sets(self) -> list[SampleBatch] | None:
        return self._test_sets

    @property
    def curvature(self) -> Curvature:
        return self._curvature

    def profile(self) -> ExperimentProfile:
        return ExperimentProfile(
            n_agents=self._graph.n_agents,
            edges=sorted(self._graph.edges),
            weights=self._matrix.weights.tolist(),
            perron=self.p.tolist(),
            roles=[agent.role for agent in self._agents],
            noise_sigmas=list(self._noise_sigmas),
        )

    def agents_for(self, variant: ExperimentVariant) -> list[AgentSpec]:
        """
        Get the agents a variant runs with; unregularized diffusion drops every regularizer.
        """
        if variant == "unregularized_diffusion":
            return [
                agent.model_copy(update={"regularizer": ZeroRegularizer()}) for agent in self._agents
            ]
        return self._agents

    def diffusion_config(self, variant: ExperimentVariant, mu: float) -> DiffusionConfig:
        algorithm = self._config.algorithm
        engine_variant: Variant = (
            "regularized_diffusion" if variant == "unregularized_diffusion" else variant
        )
        return DiffusionConfig(
            mu=mu,
            delta=algorithm.delta_for(mu),
            n_iterations=algorithm.iterations_for(mu),
            variant=engine_variant,
            seed=algorithm.seed,
            exact_gradients=algorithm.exact_gradients,
        )

    def contraction_factor(self, mu: float, delta: float | None = None) -> float:
        """
        Contraction factor of the centralized recursion at mu; warns when it is not below one.
        """
        delta = self._config.algorithm.delta_for(mu) if delta is None else delta
        gamma = contraction_factor(mu, delta, self._curvature.lower, self._curvature.upper_max)
        if gamma >= 1:
            logger.warning(
                f"Contraction factor {gamma:.4g} >= 1 at mu={mu:g}, delta={delta:g}: "
                f"convergence of the centralized recursion is not guaranteed"
            )
        return gamma

    @cached_property
    def nonsmooth_solution(self) -> OracleSolution:
        return solve_nonsmooth(self._agents, self.p, tol=self._config.metrics.oracle_tol)

    def smoothed_solution(self, delta: float, tol: float | None = None) -> OracleSolution:
        """
        Minimizer of the smoothed aggregate at delta, cached per (delta, tol).
        """
        tol = self._config.metrics.oracle_tol if tol is None else tol
        if (delta, tol) not in self._smoothed:
            self._smoothed[(delta, tol)] = solve_smoothed(self._agents, self.p, delta, tol=tol)
        return self._smoothed[(delta, tol)]

    def target_for(self, mu: float) -> np.ndarray | None:
        """
        Reference point for the MSD columns of runs at step size mu.
        """
        match self._config.metrics.target:
            case "nonsmooth":
                return self.nonsmooth_solution.w_star
            case "smoothed":
                return self.smoothed_solution(self._config.algorithm.delta_for(mu)).w_star
            case _:
                return None
