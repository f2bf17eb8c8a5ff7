import math

import numpy as np
import pytest
from pydantic import ValidationError

from regdiff.engine.diffusion import (
    combine,
    contraction_factor,
    max_contractive_step,
    run,
    step_centralized,
    step_regularized_diffusion,
)
from regdiff.engine.models import AgentSpec, DiffusionConfig, NetworkState
from regdiff.engine.streams import SampleStreams
from regdiff.errors import DivergenceDetected
from regdiff.network.topology import CombinationMatrix, Graph, build_matrix
from regdiff.risks.base import ZeroRisk, aggregate_curvature
from regdiff.risks.quadratic import QuadraticRisk
from regdiff.smoothing.regularizers import L1, ZeroRegularizer

from conftest import quadratic_agents


def _reference_run(agents, A, config, n_iterations, repetition=0):
    """
    Plain loop over agents and neighbors, written independently of the engine helpers.
    """
    streams = SampleStreams(config.seed, repetition, len(agents))
    n, dimension = len(agents), agents[0].risk.dimension
    w = np.zeros((n, dimension))
    trajectory = [w.copy()]
    for _ in range(n_iterations):
        psi = np.empty_like(w)
        for k, agent in enumerate(agents):
            sample = agent.risk.draw(streams[k])
            phi = w[k] - config.mu * agent.risk.stochastic_gradient(w[k], sample)
            threshold = config.delta * agent.regularizer.rho
            prox = np.sign(phi) * np.maximum(np.abs(phi) - threshold, 0.0)
            psi[k] = phi - config.mu * (phi - prox) / config.delta
        updated = np.zeros_like(w)
        for k in range(n):
            for l in range(n):
                updated[k] = updated[k] + A.weights[l, k] * psi[l]
        w = updated
        trajectory.append(w.copy())
    return trajectory


def _trace(record) -> list[list[float]]:
    return [row.msd_agents + [row.disagreement] for row in record.rows]


def test_matches_reference_loop_bit_for_bit(network_agents, ring_matrix):
    config = DiffusionConfig(mu=0.05, delta=0.5, n_iterations=20, seed=11)
    expected = _reference_run(network_agents, ring_matrix, config, 20)

    streams = SampleStreams(config.seed, 0, len(network_agents))
    state = NetworkState.initial(4, 3)
    for iteration in range(1, 21):
        state = step_regularized_diffusion(state, network_agents, ring_matrix, config, streams)
        assert state.iteration == iteration
        np.testing.assert_array_equal(state.iterates, expected[iteration])


def test_smoothed_step_is_a_damped_prox(network_agents, ring_matrix):
    # With quadratic d: phi - mu grad R^delta(phi) = (1 - mu/delta) phi + (mu/delta) prox_{delta R}(phi)
    config = DiffusionConfig(mu=0.1, delta=0.4, n_iterations=1, exact_gradients=True)
    start = np.random.default_rng(3).standard_normal((4, 3))
    state = NetworkState.initial(4, 3, start)
    stepped = step_regularized_diffusion(
        state, network_agents, ring_matrix, config, SampleStreams(0, 0, 4)
    )

    ratio = config.mu / config.delta
    psi = np.empty_like(start)
    for k, agent in enumerate(network_agents):
        phi = start[k] - config.mu * agent.risk.exact_gradient(start[k])
        psi[k] = (1 - ratio) * phi + ratio * agent.regularizer.prox(phi, config.delta)
    np.testing.assert_allclose(stepped.iterates, ring_matrix.weights.T @ psi, atol=1e-12)


def test_combine_accumulates_in_ascending_order(ring_matrix, rng):
    psi = rng.standard_normal((4, 3))
    expected = np.zeros_like(psi)
    for k in range(4):
        for l in range(4):
            expected[k] = expected[k] + ring_matrix.weights[l, k] * psi[l]
    np.testing.assert_array_equal(combine(ring_matrix.weights, psi), expected)


def test_record_has_a_row_per_iteration_plus_initial(network_agents, ring_matrix):
    rows = []
    record = run(
        network_agents,
        ring_matrix,
        DiffusionConfig(mu=0.05, delta=0.5, n_iterations=10),
        sink=lambda run_id, row: rows.append((run_id, row)),
        target=np.zeros(3),
        run_id="trace",
    )
    assert len(record.rows) == 11
    assert [row.iter for row in record.rows] == list(range(11))
    assert [run_id for run_id, _ in rows] == ["trace"] * 11
    assert record.rows[0].msd_network == 0.0
    assert math.isnan(record.rows[-1].test_error)


def test_rows_without_target_carry_nan(network_agents, ring_matrix):
    record = run(network_agents, ring_matrix, DiffusionConfig(mu=0.05, delta=0.5, n_iterations=2))
    assert math.isnan(record.rows[-1].msd_network)
    assert math.isnan(record.rows[-1].msd_centroid)
    assert record.rows[-1].disagreement >= 0.0


def test_runs_are_deterministic(network_agents, ring_matrix):
    config = DiffusionConfig(mu=0.05, delta=0.5, n_iterations=30, seed=4)
    first = run(network_agents, ring_matrix, config, target=np.zeros(3))
    second = run(network_agents, ring_matrix, config, target=np.zeros(3))
    other = run(network_agents, ring_matrix, config, target=np.zeros(3), repetition=1)
    assert _trace(first) == _trace(second)
    assert first.fingerprint == second.fingerprint
    assert _trace(first) != _trace(other)


def test_zero_regularizer_makes_variants_coincide(ring_matrix):
    agents = [
        agent.model_copy(update={"regularizer": ZeroRegularizer()}) for agent in quadratic_agents(4, 3, seed=2)
    ]
    traces = {
        variant: run(
            agents,
            ring_matrix,
            DiffusionConfig(mu=0.05, delta=0.5, n_iterations=15, variant=variant),
            target=np.ones(3),
        )
        for variant in ["regularized_diffusion", "non_incremental"]
    }
    assert _trace(traces["regularized_diffusion"]) == _trace(traces["non_incremental"])


def test_non_incremental_differs_when_regularized(network_agents, ring_matrix):
    traces = [
        run(
            network_agents,
            ring_matrix,
            DiffusionConfig(mu=0.05, delta=0.5, n_iterations=15, variant=variant),
            target=np.zeros(3),
        )
        for variant in ["regularized_diffusion", "non_incremental"]
    ]
    assert traces[0].rows[-1].msd_network != traces[1].rows[-1].msd_network


def test_identical_agents_stay_in_consensus():
    risk = QuadraticRisk(np.diag([1.0, 2.0]), np.array([1.0, -1.0]))
    agents = [AgentSpec(risk=risk, regularizer=L1(rho=0.2)) for _ in range(5)]
    A = build_matrix(Graph.ring(5), "uniform-averaging")
    record = run(
        agents,
        A,
        DiffusionConfig(mu=0.1, delta=0.5, n_iterations=50, exact_gradients=True),
        initial=np.array([3.0, -2.0]),
    )
    assert max(row.disagreement for row in record.rows) < 1e-20


def test_non_cooperative_ignores_the_network(network_agents, ring_matrix):
    config = DiffusionConfig(mu=0.05, delta=0.5, n_iterations=10, variant="non_cooperative", seed=5)
    isolated = run(network_agents, ring_matrix, config, target=np.zeros(3))
    identity = run(
        network_agents,
        CombinationMatrix.identity(4),
        config.model_copy(update={"variant": "regularized_diffusion"}),
        target=np.zeros(3),
    )
    assert [row.msd_agents for row in isolated.rows] == [row.msd_agents for row in identity.rows]


def test_centralized_reference_applies_the_aggregate_map(network_agents, ring_matrix):
    config = DiffusionConfig(mu=0.05, delta=0.5, n_iterations=5, variant="centralized_reference")
    record = run(network_agents, ring_matrix, config, target=np.zeros(3))

    w = np.zeros(3)
    for _ in range(5):
        w = step_centralized(w, network_agents, ring_matrix.perron, config)
    assert record.rows[-1].msd_network == pytest.approx(float(w @ w), rel=1e-12)
    assert record.rows[-1].disagreement < 1e-25


def test_divergence_reports_the_iteration():
    agents = [AgentSpec(risk=QuadraticRisk(100.0 * np.eye(2), np.zeros(2)))]
    with pytest.raises(DivergenceDetected) as excinfo:
        run(
            agents,
            CombinationMatrix.identity(1),
            DiffusionConfig(mu=1.0, delta=1.0, n_iterations=100, exact_gradients=True),
            initial=np.ones(2),
        )
    # |1 - 100| = 99 per step crosses 1e12 on the seventh iteration
    assert excinfo.value.iteration == 7
    assert any("iteration 7" in note for note in excinfo.value.__notes__)


def test_run_checks_agent_count(network_agents):
    with pytest.raises(ValueError):
        run(network_agents, CombinationMatrix.identity(3), DiffusionConfig(mu=0.1, delta=1.0, n_iterations=1))


def test_structure_informed_agents_only_regularize():
    agents = [
        AgentSpec(risk=ZeroRisk(2), regularizer=L1(rho=1.0), role="structure_informed"),
    ]
    record = run(
        agents,
        CombinationMatrix.identity(1),
        DiffusionConfig(mu=0.1, delta=0.5, n_iterations=3),
        target=np.zeros(2),
        initial=np.array([0.05, -0.05]),
    )
    # Inside the Huber region each step scales w by 1 - mu/delta
    assert record.rows[-1].msd_network == pytest.approx(0.005 * 0.8**6 / 1.0, rel=1e-9)


def test_agent_roles_are_validated():
    with pytest.raises(ValidationError):
        AgentSpec(risk=QuadraticRisk(np.eye(2), np.zeros(2)), role="structure_informed")
    with pytest.raises(ValidationError):
        AgentSpec(risk=ZeroRisk(2), regularizer=L1(rho=1.0), role="data_informed")


def test_delta_follows_kappa():
    config = DiffusionConfig(mu=0.01, kappa=0.3, n_iterations=1)
    assert config.delta == pytest.approx(0.01**0.2)


@pytest.mark.parametrize(
    "fields",
    [
        {"mu": 0.01, "n_iterations": 1},
        {"mu": 0.01, "kappa": 0.2, "n_iterations": 1},
        {"mu": 0.01, "kappa": 0.5, "n_iterations": 1},
        {"mu": 1.0, "delta": 0.4, "n_iterations": 1},
        {"mu": 0.01, "delta": 0.4, "kappa": 0.3, "n_iterations": 1},
    ],
    ids=["no_delta", "kappa_low", "kappa_high", "step_too_large", "inconsistent"],
)
def test_config_validation(fields):
    with pytest.raises(ValidationError):
        DiffusionConfig(**fields)


def test_initial_state_shapes():
    assert NetworkState.initial(3, 2).iterates.shape == (3, 2)
    np.testing.assert_array_equal(NetworkState.initial(2, 2, np.array([1.0, 2.0])).iterates, [[1, 2], [1, 2]])
    with pytest.raises(ValueError):
        NetworkState.initial(3, 2, np.zeros((2, 2)))


def test_streams_are_keyed_per_agent_and_repetition():
    first, again, other = SampleStreams(1, 0, 2), SampleStreams(1, 0, 2), SampleStreams(1, 1, 2)
    draw = first[0].standard_normal(3)
    np.testing.assert_array_equal(draw, again[0].standard_normal(3))
    assert not np.array_equal(draw, first[1].standard_normal(3))
    assert not np.array_equal(draw, other[0].standard_normal(3))


def test_contraction_factor_equals_one_at_the_critical_step():
    mu_star = max_contractive_step(0.5, 1.0, 2.0)
    assert contraction_factor(mu_star, 0.5, 1.0, 2.0) == pytest.approx(1.0)
    assert contraction_factor(0.5 * mu_star, 0.5, 1.0, 2.0) < 1.0
    assert contraction_factor(1.0, 0.5, 1.0, 2.0) == math.inf


def test_centralized_map_is_a_contraction(rng):
    agents = quadratic_agents(4, 3, seed=9)
    A = build_matrix(Graph.ring(4), "metropolis")
    curvature = aggregate_curvature([agent.risk for agent in agents], A.perron)
    delta = 0.5
    mu = 0.5 * max_contractive_step(delta, curvature.lower, curvature.upper_max)
    gamma = contraction_factor(mu, delta, curvature.lower, curvature.upper_max)
    config = DiffusionConfig(mu=mu, delta=delta, n_iterations=1)
    for _ in range(200):
        x, y = rng.uniform(-3, 3, (2, 3))
        tx = step_centralized(x, agents, A.perron, config)
        ty = step_centralized(y, agents, A.perron, config)
        assert np.linalg.norm(tx - ty) <= gamma * np.linalg.norm(x - y) + 1e-12
