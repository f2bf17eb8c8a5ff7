from typing import Annotated, Literal, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    model_validator,
)

from regdiff.config import EVALUATION_SIZE, ORACLE_TOL
from regdiff.engine.models import AgentRole
from regdiff.network.topology import WeightingRule
from regdiff.risks.quadratic import NoiseMode
from regdiff.smoothing.regularizers import (
    GroupL1,
    IndicatorBall,
    IndicatorBox,
    L1,
    WeightedL1,
    WeightedSum,
    ZeroRegularizer,
)

# Define types for topologies, variants, targets and tasks
Topology = Literal["complete", "ring", "line", "star", "small_world", "edges"]
ExperimentVariant = Literal[
    "regularized_diffusion",
    "unregularized_diffusion",
    "non_incremental",
    "centralized_reference",
    "non_cooperative",
]
TargetKind = Literal["nonsmooth", "smoothed", "none"]
TaskName = Literal["run", "bias", "contraction", "msd"]
InitialState = Literal["zero", "target"]


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


# Define the network block
class NetworkSpec(_Block):
    n_agents: PositiveInt
    topology: Topology = "ring"
    self_loops: bool = True
    rule: WeightingRule = "metropolis"
    edges: list[tuple[int, int]] = []  # directed (l, k) pairs for topology = "edges"
    weights: list[tuple[int, int, float]] = []  # (l, k, a_lk) for rule = "explicit-weights"
    degree: PositiveInt = 4  # small-world neighbours
    rewire: Annotated[float, Field(ge=0.0, le=1.0)] = 0.3  # small-world rewiring probability
    seed: int = 0

    @model_validator(mode="after")
    def _check_edges(self):
        if self.topology == "edges" and not self.edges:
            raise ValueError("network.edges must list the directed edges when topology = 'edges'")
        if self.rule == "explicit-weights" and not self.weights:
            raise ValueError("network.weights is required when rule = 'explicit-weights'")
        for source, sink in self.edges:
            if not (0 <= source < self.n_agents and 0 <= sink < self.n_agents):
                raise ValueError(f"network.edges: ({source}, {sink}) is out of range")
        return self


# Define the problem block
class ProblemSpec(_Block):
    dimension: PositiveInt
    informative: PositiveInt | None = None  # leading template ones; needed by logistic risks
    evaluation_size: Annotated[int, Field(ge=EVALUATION_SIZE)] = EVALUATION_SIZE
    noise_profile: tuple[PositiveFloat, PositiveFloat] = (0.1, 1.0)  # log-uniform sigma range
    seed: int = 0

    @model_validator(mode="after")
    def _check_template(self):
        if self.informative is not None and self.informative > self.dimension:
            raise ValueError(
                f"problem.informative ({self.informative}) exceeds problem.dimension ({self.dimension})"
            )
        low, high = self.noise_profile
        if low > high:
            raise ValueError("problem.noise_profile must be (low, high) with low <= high")
        return self


# Define the risk specs
class LogisticSpec(_Block):
    kind: Literal["logistic_l2"] = "logistic_l2"
    rho2: NonNegativeFloat


class QuadraticSpec(_Block):
    kind: Literal["quadratic"] = "quadratic"
    hessian: list[list[float]] | None = None  # drawn at random when unset
    linear: list[float] | None = None  # drawn at random when unset
    eigen_range: tuple[PositiveFloat, PositiveFloat] = (1.0, 2.0)
    linear_scale: NonNegativeFloat = 1.0
    noise: NoiseMode = "synthetic"

    @model_validator(mode="after")
    def _check_range(self):
        if self.eigen_range[0] > self.eigen_range[1]:
            raise ValueError("eigen_range must be (low, high) with low <= high")
        return self


class ZeroRiskSpec(_Block):
    kind: Literal["zero"] = "zero"


RiskSpec = Annotated[Union[LogisticSpec, QuadraticSpec, ZeroRiskSpec], Field(discriminator="kind")]


class RandomGroupL1(_Block):
    """
    A group_l1 term whose indices are drawn per agent from the sparse template coordinates.
    """

    kind: Literal["random_group_l1"] = "random_group_l1"
    rho: NonNegativeFloat
    count: PositiveInt = 5


RegularizerSpec = Annotated[
    Union[
        ZeroRegularizer,
        L1,
        GroupL1,
        WeightedL1,
        IndicatorBox,
        IndicatorBall,
        WeightedSum,
        RandomGroupL1,
    ],
    Field(discriminator="kind"),
]


# Define the agent roster
class AgentGroupSpec(_Block):
    role: AgentRole = "custom"
    count: PositiveInt = 1
    noise_sigma: NonNegativeFloat | None = None  # drawn from problem.noise_profile when unset
    risk: RiskSpec = ZeroRiskSpec()
    regularizer: RegularizerSpec = ZeroRegularizer()

    @model_validator(mode="after")
    def _check_role(self):
        if self.role == "structure_informed" and self.risk.kind != "zero":
            raise ValueError("agents.risk must be zero for structure_informed agents")
        if self.role == "data_informed" and self.regularizer.kind != "zero":
            raise ValueError("agents.regularizer must be zero for data_informed agents")
        return self


# Define the algorithm block
class AlgorithmSpec(_Block):
    variants: list[ExperimentVariant] = ["regularized_diffusion"]
    mu: PositiveFloat | None = None
    mu_sweep: list[PositiveFloat] | None = None
    delta: PositiveFloat | None = None
    kappa: float | None = None
    iterations: NonNegativeInt = 1000
    repetitions: PositiveInt = 1
    seed: int = 0
    exact_gradients: bool = False
    scale_iterations: bool = False  # iterations * max(mu) / mu at every sweep point
    initial: InitialState = "zero"

    @model_validator(mode="after")
    def _check_steps(self):
        if self.mu is not None and self.mu_sweep is not None:
            raise ValueError("algorithm.mu and algorithm.mu_sweep are mutually exclusive")
        if self.mu_sweep is not None and not self.mu_sweep:
            raise ValueError("algorithm.mu_sweep must not be empty")
        if (self.delta is None) == (self.kappa is None):
            raise ValueError("Exactly one of algorithm.delta and algorithm.kappa must be set")
        if self.kappa is not None and not 0.25 < self.kappa < 0.5:
            raise ValueError(f"algorithm.kappa must lie in (1/4, 1/2), got {self.kappa}")
        if not self.variants:
            raise ValueError("algorithm.variants must not be empty")
        for mu in self.mu_values():
            if mu > 2 * self.delta_for(mu):
                raise ValueError(
                    f"algorithm.mu={mu} exceeds 2*delta={2 * self.delta_for(mu):.6g}"
                )
        return self

    def mu_values(self) -> list[float]:
        if self.mu_sweep is not None:
            return list(self.mu_sweep)
        return [self.mu] if self.mu is not None else []

    def delta_for(self, mu: float) -> float:
        if self.delta is not None:
            return self.delta
        return mu ** (0.5 - self.kappa)

    def iterations_for(self, mu: float) -> int:
        if not self.scale_iterations:
            return self.iterations
        return int(round(self.iterations * max(self.mu_values()) / mu))


# Define the metrics block
class MetricsSpec(_Block):
    target: TargetKind = "smoothed"
    oracle_tol: PositiveFloat = ORACLE_TOL
    window_fraction: Annotated[float, Field(gt=0.0, le=0.5)] = 0.2
    test_size: NonNegativeInt = 0
    write_runs: bool = True


# Define the verification block
class VerificationSpec(_Block):
    deltas: list[PositiveFloat] = [1e-1, 1e-2, 1e-3, 1e-4]
    mu_factors: list[PositiveFloat] = [0.5, 0.1]
    mu_values: list[PositiveFloat] | None = None  # explicit steps, overriding mu_factors
    contraction_steps: PositiveInt = 500
    contraction_floor: PositiveFloat = 1e-4  # ratios count while the distance exceeds this
    bias_slope_min: float = 0.9
    msd_slope_band: tuple[float, float] = (0.8, 1.3)
    moment_draws: Annotated[int, Field(ge=1000)] = 1000


# Define the experiment config model
class ExperimentConfig(_Block):
    name: str = "experiment"
    task: TaskName = "run"
    output: str = "results"
    network: NetworkSpec
    problem: ProblemSpec
    agents: list[AgentGroupSpec]
    algorithm: AlgorithmSpec
    metrics: MetricsSpec = MetricsSpec()
    verification: VerificationSpec = VerificationSpec()

    @model_validator(mode="after")
    def _check_consistency(self):
        n_agents = sum(group.count for group in self.agents)
        if n_agents != self.network.n_agents:
            raise ValueError(
                f"agents: roster counts sum to {n_agents} but network.n_agents is {self.network.n_agents}"
            )

        dimension = self.problem.dimension
        for index, group in enumerate(self.agents):
            self._check_group(index, group, dimension)

        if self.metrics.test_size > 0 and self.problem.informative is None:
            raise ValueError("problem.informative is required when metrics.test_size > 0")

        match self.task:
            case "run":
                if not self.algorithm.mu_values():
                    raise ValueError("algorithm.mu or algorithm.mu_sweep is required for task 'run'")
            case "msd":
                if self.algorithm.kappa is None:
                    raise ValueError("algorithm.kappa is required for task 'msd'")
                if len(self.algorithm.mu_values()) < 3:
                    raise ValueError("algorithm.mu_sweep needs at least 3 values for task 'msd'")
                if self.metrics.target == "none":
                    raise ValueError("metrics.target must name a minimizer for task 'msd'")
            case "contraction":
                if self.algorithm.delta is None:
                    raise ValueError("algorithm.delta is required for task 'contraction'")
                if self.verification.mu_values is not None:
                    for mu in self.verification.mu_values:
                        if mu > 2 * self.algorithm.delta:
                            raise ValueError(
                                f"verification.mu_values: {mu} exceeds 2*delta={2 * self.algorithm.delta}"
                            )
            case "bias":
                if len(self.verification.deltas) < 3:
                    raise ValueError("verification.deltas needs at least 3 values for task 'bias'")
        return self

    def _check_group(self, index: int, group: AgentGroupSpec, dimension: int):
        prefix = f"agents[{index}]"
        risk = group.risk
        if isinstance(risk, QuadraticSpec):
            if risk.hessian is not None and (
                len(risk.hessian) != dimension or any(len(row) != dimension for row in risk.hessian)
            ):
                raise ValueError(f"{prefix}.risk.hessian must be {dimension} x {dimension}")
            if risk.linear is not None and len(risk.linear) != dimension:
                raise ValueError(f"{prefix}.risk.linear must have {dimension} entries")
        if isinstance(risk, LogisticSpec) and self.problem.informative is None:
            raise ValueError(f"{prefix}.risk: logistic risks need problem.informative")

        regularizer = group.regularizer
        match regularizer:
            case GroupL1(indices=indices) if indices and max(indices) >= dimension:
                raise ValueError(f"{prefix}.regularizer.indices must be below {dimension}")
            case WeightedL1(weights=weights) if len(weights) != dimension:
                raise ValueError(f"{prefix}.regularizer.weights must have {dimension} entries")
            case RandomGroupL1(count=count):
                if self.problem.informative is None:
                    raise ValueError(f"{prefix}.regularizer: random_group_l1 needs problem.informative")
                sparse = dimension - self.problem.informative
                if count > sparse:
                    raise ValueError(
                        f"{prefix}.regularizer.count ({count}) exceeds the {sparse} sparse coordinates"
                    )
