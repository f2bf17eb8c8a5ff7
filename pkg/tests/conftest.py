import logging

import numpy as np
import pytest

from regdiff.engine.models import AgentSpec
from regdiff.network.topology import Graph, build_matrix
from regdiff.risks.quadratic import QuadraticRisk
from regdiff.smoothing.regularizers import L1


@pytest.fixture(autouse=True)
def propagate_regdiff_logs():
    # The CLI installs a non-propagating logger; caplog listens on the root logger
    logger = logging.getLogger("regdiff")
    logger.propagate = True
    yield
    logger.propagate = True


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_spd(rng: np.random.Generator, dimension: int, low: float, high: float) -> np.ndarray:
    basis, _ = np.linalg.qr(rng.standard_normal((dimension, dimension)))
    hessian = (basis * rng.uniform(low, high, dimension)) @ basis.T
    return 0.5 * (hessian + hessian.T)


def quadratic_agents(
    n_agents: int, dimension: int, seed: int = 0, rho: float = 0.3, noise_sigma: float = 0.5
) -> list[AgentSpec]:
    rng = np.random.default_rng(seed)
    return [
        AgentSpec(
            risk=QuadraticRisk(
                random_spd(rng, dimension, 1.0, 2.0),
                rng.standard_normal(dimension),
                noise_sigma=noise_sigma,
            ),
            regularizer=L1(rho=rho),
        )
        for _ in range(n_agents)
    ]


@pytest.fixture
def ring_matrix():
    return build_matrix(Graph.ring(4), "metropolis")


@pytest.fixture
def network_agents():
    return quadratic_agents(4, 3, seed=7)
