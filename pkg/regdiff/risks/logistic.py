import logging
from functools import cached_property
from typing import override

import numpy as np

from regdiff.config import EVALUATION_SEED, EVALUATION_SIZE
from regdiff.risks.base import SmoothRisk
from regdiff.risks.data import DataModel, Sample, standard_normal_bank

logger = logging.getLogger(__name__)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form stays finite for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LogisticRisk(SmoothRisk):
    """
    l2-regularized logistic risk J(w) = E ln(1 + exp(-gamma h^T w)) + rho2 ||w||^2 under a DataModel.

    The expectation has no closed form, so value and exact gradient are averages over a frozen
    evaluation set. With z = gamma h = template + sigma xi, the set is built from a bank of
    standard normal draws shared across risks of the same dimension, scaled by this risk's sigma.
    """

    kind = "logistic_l2"

    def __init__(
        self,
        rho2: float,
        data: DataModel,
        evaluation_size: int = EVALUATION_SIZE,
        evaluation_seed: int = EVALUATION_SEED,
    ):
        if rho2 < 0:
            raise ValueError(f"rho2 must be nonnegative, got {rho2}")
        if evaluation_size < EVALUATION_SIZE:
            raise ValueError(
                f"The evaluation set needs at least {EVALUATION_SIZE} samples, got {evaluation_size}"
            )
        self._rho2 = float(rho2)
        self._data = data
        self._bank = standard_normal_bank(data.dimension, evaluation_size, evaluation_seed)

    @property
    @override
    def dimension(self) -> int:
        return self._data.dimension

    @property
    def rho2(self) -> float:
        return self._rho2

    @property
    def data(self) -> DataModel:
        return self._data

    def _margins(self, w: np.ndarray) -> np.ndarray:
        # z_j^T w for every evaluation sample, without materializing z
        return self._data.template @ w + self._data.noise_sigma * (self._bank @ w)

    @override
    def value(self, w: np.ndarray) -> float:
        loss = np.mean(np.logaddexp(0.0, -self._margins(w)))
        return float(loss + self._rho2 * w @ w)

    @override
    def exact_gradient(self, w: np.ndarray) -> np.ndarray:
        weights = sigmoid(-self._margins(w))
        n = weights.size
        loss_gradient = -(
            self._data.template * weights.mean()
            + self._data.noise_sigma * (self._bank.T @ weights) / n
        )
        return loss_gradient + 2.0 * self._rho2 * w

    @override
    def draw(self, rng: np.random.Generator) -> Sample:
        return self._data.draw(rng)

    @override
    def stochastic_gradient(self, w: np.ndarray, sample: Sample) -> np.ndarray:
        z = sample.gamma * sample.h
        return -z * sigmoid(-(z @ w)) + 2.0 * self._rho2 * w

    @cached_property
    def _second_moment(self) -> np.ndarray:
        t = self._data.template
        sigma = self._data.noise_sigma
        n = self._bank.shape[0]
        mean = self._bank.mean(axis=0)
        gram = self._bank.T @ self._bank / n
        return np.outer(t, t) + sigma * (np.outer(t, mean) + np.outer(mean, t)) + sigma**2 * gram

    @property
    @override
    def lipschitz(self) -> float:
        # The logistic curvature is at most 1/4
        return float(0.25 * np.linalg.eigvalsh(self._second_moment)[-1] + 2.0 * self._rho2)

    @property
    @override
    def strong_convexity(self) -> float:
        return 2.0 * self._rho2

    def __repr__(self) -> str:
        return f"LogisticRisk(rho2={self._rho2}, data={self._data!r})"
