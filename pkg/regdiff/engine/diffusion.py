import logging
import math
from typing import Callable, Sequence

import numpy as np

from regdiff.config import DIVERGENCE_THRESHOLD
from regdiff.engine.models import AgentSpec, DiffusionConfig, NetworkState
from regdiff.engine.streams import SampleStreams
from regdiff.errors import DivergenceDetected, RegdiffError
from regdiff.metrics.diagnostics import centroid_and_disagreement, test_error
from regdiff.metrics.records import RecordRow, RunRecord, fingerprint
from regdiff.network.topology import CombinationMatrix
from regdiff.risks.data import SampleBatch
from regdiff.smoothing.proximity import SmoothedRegularizer, moreau_gradient

logger = logging.getLogger(__name__)

RowSink = Callable[[str, RecordRow], None]


def regularizer_gradient(agent: AgentSpec, w: np.ndarray, delta: float) -> np.ndarray:
    """
    Gradient of the agent's smoothed regularizer R_k^delta at w.
    """
    if agent.proximity is None:
        return moreau_gradient(agent.regularizer, w, delta)
    return SmoothedRegularizer(agent.regularizer, delta, agent.proximity).gradient(w)


def _risk_gradient(agent: AgentSpec, w: np.ndarray, config: DiffusionConfig, rng) -> np.ndarray:
    if config.exact_gradients:
        return agent.risk.exact_gradient(w)
    return agent.risk.stochastic_gradient(w, agent.risk.draw(rng))


def _check_finite(iterates: np.ndarray, iteration: int):
    if not np.all(np.isfinite(iterates)) or np.max(np.abs(iterates)) > DIVERGENCE_THRESHOLD:
        raise DivergenceDetected(
            f"Iterates left the finite range (threshold {DIVERGENCE_THRESHOLD:.0e}) at iteration {iteration}",
            iteration=iteration,
        )


def combine(weights: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """
    w_k = sum_l a_lk psi_l, accumulated over l in ascending order.
    """
    combined = np.zeros_like(psi)
    for source in range(psi.shape[0]):
        combined += np.outer(weights[source], psi[source])
    return combined


def _adapt_then_combine(
    state: NetworkState,
    agents: Sequence[AgentSpec],
    A: CombinationMatrix,
    config: DiffusionConfig,
    streams: SampleStreams,
    regularize_at_previous: bool,
) -> NetworkState:
    mu, delta = config.mu, config.delta
    psi = np.empty_like(state.iterates)

    # Adapt, one agent at a time in index order
    for k, agent in enumerate(agents):
        w = state.iterates[k]
        phi = w - mu * _risk_gradient(agent, w, config, streams[k])
        anchor = w if regularize_at_previous else phi
        psi[k] = phi - mu * regularizer_gradient(agent, anchor, delta)

    # Combine once every agent has adapted
    iterates = combine(A.weights, psi)
    _check_finite(iterates, state.iteration + 1)
    return NetworkState(iterates, state.iteration + 1)


def step_regularized_diffusion(
    state: NetworkState,
    agents: Sequence[AgentSpec],
    A: CombinationMatrix,
    config: DiffusionConfig,
    streams: SampleStreams,
) -> NetworkState:
    """
    One iteration of regularized diffusion:
    phi_k = w_k - mu g_k(w_k), psi_k = phi_k - mu grad R_k^delta(phi_k), w_k = sum_l a_lk psi_l.

    Raises:
        DivergenceDetected: If any component becomes non-finite or exceeds the threshold.
    """
    return _adapt_then_combine(state, agents, A, config, streams, regularize_at_previous=False)


def step_non_incremental(
    state: NetworkState,
    agents: Sequence[AgentSpec],
    A: CombinationMatrix,
    config: DiffusionConfig,
    streams: SampleStreams,
) -> NetworkState:
    """
    As step_regularized_diffusion, with the regularizer gradient taken at the pre-adapt iterate w_k.
    """
    return _adapt_then_combine(state, agents, A, config, streams, regularize_at_previous=True)


def step_centralized(
    w: np.ndarray, agents: Sequence[AgentSpec], p: np.ndarray, config: DiffusionConfig
) -> np.ndarray:
    """
    Apply T_c(w) = w - mu sum_k p_k grad J_k(w) - mu sum_k p_k grad R_k^delta(w) with exact gradients.

    Raises:
        DivergenceDetected: If the result is non-finite or exceeds the threshold.
    """
    w = np.asarray(w, dtype=float)
    risk_term = np.zeros_like(w)
    regularizer_term = np.zeros_like(w)
    for weight, agent in zip(p, agents):
        risk_term += weight * agent.risk.exact_gradient(w)
        regularizer_term += weight * regularizer_gradient(agent, w, config.delta)
    result = w - config.mu * risk_term - config.mu * regularizer_term
    _check_finite(result, -1)
    return result


def contraction_factor(mu: float, delta: float, lam_l: float, lam_u: float) -> float:
    """
    Contraction factor gamma_c = 1 - mu lam_L + mu^2 lam_U^2 / (2 - mu/delta) of T_c.

    Returns inf when mu >= 2 delta.
    """
    denominator = 2.0 - mu / delta
    if denominator <= 0:
        return math.inf
    return 1.0 - mu * lam_l + mu**2 * lam_u**2 / denominator


def max_contractive_step(delta: float, lam_l: float, lam_u: float) -> float:
    """
    The step mu* = 2 lam_L / (lam_U^2 + lam_L/delta) below which gamma_c < 1.
    """
    return 2.0 * lam_l / (lam_u**2 + lam_l / delta)


def _row(
    iteration: int,
    iterates: np.ndarray,
    p: np.ndarray,
    target: np.ndarray | None,
    test_sets: Sequence[SampleBatch] | None,
) -> RecordRow:
    centroid, disagreement = centroid_and_disagreement(iterates, p)
    if target is None:
        msd_agents = [math.nan] * iterates.shape[0]
        msd_centroid = math.nan
    else:
        deviations = iterates - target
        msd_agents = np.sum(deviations * deviations, axis=1).tolist()
        msd_centroid = float(np.sum((centroid - target) ** 2))

    errors = []
    if test_sets is not None:
        errors = [test_error(iterates[k], batch) for k, batch in enumerate(test_sets)]

    return RecordRow(
        iter=iteration,
        msd_network=float(np.mean(msd_agents)),
        msd_centroid=msd_centroid,
        disagreement=disagreement,
        test_error=float(np.mean(errors)) if errors else math.nan,
        msd_agents=msd_agents,
        test_error_agents=errors,
    )


def run(
    agents: Sequence[AgentSpec],
    A: CombinationMatrix,
    config: DiffusionConfig,
    sink: RowSink | None = None,
    target: np.ndarray | None = None,
    test_sets: Sequence[SampleBatch] | None = None,
    run_id: str | None = None,
    repetition: int = 0,
    initial: np.ndarray | None = None,
) -> RunRecord:
    """
    Execute ``config.n_iterations`` steps of the configured variant and record metrics.

    The record holds n_iterations + 1 rows, the first for the initial state. MSD columns are
    measured against ``target`` and test errors against the per-agent ``test_sets``.

    Args:
        agents (Sequence[AgentSpec]): One spec per agent.
        A (CombinationMatrix): Combination matrix; its Perron vector weights the centroid.
        config (DiffusionConfig): Step size, smoothing, variant, iteration count and seed.
        sink (RowSink, optional): Called with (run_id, row) after every iteration.
        target (np.ndarray, optional): Reference point for the MSD columns.
        test_sets (Sequence[SampleBatch], optional): Per-agent test sets.
        run_id (str, optional): Record identifier; derived from the config if omitted.
        repetition (int): Monte-Carlo repetition index, selects the random substreams.
        initial (np.ndarray, optional): Initial iterate, shared (M,) or per agent (N, M).

    Returns:
        RunRecord: The per-iteration trace.

    Raises:
        ValueError: If agent dimensions or counts disagree with A.
        RegdiffError: Any step error, with the failing iteration attached.

    Example:
        >>> record = run(agents, A, DiffusionConfig(mu=0.01, delta=0.1, n_iterations=100))
        >>> record.rows[-1].msd_network
    """
    dimensions = {agent.risk.dimension for agent in agents}
    if len(dimensions) != 1:
        raise ValueError(f"Agents disagree on the problem dimension: {sorted(dimensions)}")
    if len(agents) != A.n:
        raise ValueError(f"{len(agents)} agents given for a {A.n}-agent combination matrix")
    if test_sets is not None and len(test_sets) != len(agents):
        raise ValueError("Provide one test set per agent")

    dimension = dimensions.pop()
    p = A.perron
    payload = config.model_dump_json()
    run_id = run_id or f"{config.variant}-{fingerprint(payload)}-{repetition}"
    matrix = CombinationMatrix.identity(A.n) if config.variant == "non_cooperative" else A
    streams = SampleStreams(config.seed, repetition, len(agents))
    state = NetworkState.initial(len(agents), dimension, initial)

    record = RunRecord(
        run_id=run_id,
        variant=config.variant,
        repetition=repetition,
        seed=config.seed,
        fingerprint=fingerprint(payload),
    )
    logger.debug(f"Starting run {run_id} for {config.n_iterations} iterations")

    def emit(row: RecordRow):
        record.rows.append(row)
        if sink is not None:
            sink(run_id, row)

    emit(_row(0, state.iterates, p, target, test_sets))
    iteration = 0
    try:
        for iteration in range(1, config.n_iterations + 1):
            match config.variant:
                case "regularized_diffusion" | "non_cooperative":
                    state = step_regularized_diffusion(state, agents, matrix, config, streams)
                case "non_incremental":
                    state = step_non_incremental(state, agents, matrix, config, streams)
                case "centralized_reference":
                    w = step_centralized(state.iterates[0], agents, p, config)
                    state = NetworkState(np.tile(w, (len(agents), 1)), iteration)
            emit(_row(iteration, state.iterates, p, target, test_sets))
    except RegdiffError as e:
        if e.iteration is None or e.iteration < 0:
            e.iteration = iteration
        e.add_note(f"Run {run_id} failed at iteration {iteration}")
        logger.error(f"Run {run_id} failed at iteration {iteration}: {e}")
        raise

    logger.debug(f"Finished run {run_id}")
    return record
