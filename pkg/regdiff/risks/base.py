import logging
from abc import ABC, abstractmethod
from typing import Any, Sequence, override

import numpy as np
from pydantic import BaseModel

logger = logging.getLogger(__name__)


class SmoothRisk(ABC):
    """
    Abstract base class for differentiable stochastic risks J(w) = E Q(w; x).
    """

    kind: str

    @property
    @abstractmethod
    def dimension(self) -> int:
        pass

    @abstractmethod
    def value(self, w: np.ndarray) -> float:
        """
        Evaluate the (population) risk at w.
        """

    @abstractmethod
    def exact_gradient(self, w: np.ndarray) -> np.ndarray:
        """
        Gradient of the population risk at w.
        """

    @abstractmethod
    def draw(self, rng: np.random.Generator) -> Any:
        """
        Draw the data needed for one stochastic gradient, or None if no randomness is involved.
        """

    @abstractmethod
    def stochastic_gradient(self, w: np.ndarray, sample: Any) -> np.ndarray:
        """
        Instantaneous gradient approximation at w built from one drawn sample.
        """

    @property
    @abstractmethod
    def lipschitz(self) -> float:
        """
        Lipschitz constant of the exact gradient.
        """

    @property
    @abstractmethod
    def strong_convexity(self) -> float:
        """
        Strong convexity modulus of the risk (0 when only convex).
        """

    @property
    def hessian(self) -> np.ndarray | None:
        """
        The constant Hessian of a quadratic risk, None otherwise.
        """
        return None


class ZeroRisk(SmoothRisk):
    """
    J = 0, held by agents that only contribute structural information.
    """

    kind = "zero"

    def __init__(self, dimension: int):
        self._dimension = dimension

    @property
    @override
    def dimension(self) -> int:
        return self._dimension

    @override
    def value(self, w: np.ndarray) -> float:
        return 0.0

    @override
    def exact_gradient(self, w: np.ndarray) -> np.ndarray:
        return np.zeros(self._dimension)

    @override
    def draw(self, rng: np.random.Generator) -> None:
        return None

    @override
    def stochastic_gradient(self, w: np.ndarray, sample: Any) -> np.ndarray:
        return np.zeros(self._dimension)

    @property
    @override
    def lipschitz(self) -> float:
        return 0.0

    @property
    @override
    def strong_convexity(self) -> float:
        return 0.0

    @property
    @override
    def hessian(self) -> np.ndarray:
        return np.zeros((self._dimension, self._dimension))

    def __repr__(self) -> str:
        return f"ZeroRisk(dimension={self._dimension})"


def exact_gradient(J: SmoothRisk, w: np.ndarray) -> np.ndarray:
    return J.exact_gradient(np.asarray(w, dtype=float))


def stochastic_gradient(J: SmoothRisk, w: np.ndarray, sample: Any) -> np.ndarray:
    return J.stochastic_gradient(np.asarray(w, dtype=float), sample)


class Curvature(BaseModel):
    lower: float  # strong convexity of the p-weighted aggregate
    upper: float  # Lipschitz constant of the p-weighted aggregate gradient
    upper_max: float  # largest per-agent Lipschitz constant


def aggregate_curvature(risks: Sequence[SmoothRisk], p: np.ndarray) -> Curvature:
    """
    Estimate the curvature constants of sum_k p_k J_k.

    Quadratic aggregates use the exact extreme eigenvalues of sum_k p_k H_k; anything else
    falls back to the p-weighted sums of the per-agent constants.

    Args:
        risks (Sequence[SmoothRisk]): Per-agent risks.
        p (np.ndarray): Perron weights.

    Returns:
        Curvature: The aggregate lower and upper constants and the largest per-agent constant.
    """
    upper_max = max(risk.lipschitz for risk in risks)
    hessians = [risk.hessian for risk in risks]
    if all(hessian is not None for hessian in hessians):
        aggregate = sum(weight * hessian for weight, hessian in zip(p, hessians))
        eigenvalues = np.linalg.eigvalsh(aggregate)
        return Curvature(
            lower=float(max(eigenvalues[0], 0.0)),
            upper=float(eigenvalues[-1]),
            upper_max=float(upper_max),
        )

    return Curvature(
        lower=float(sum(weight * risk.strong_convexity for weight, risk in zip(p, risks))),
        upper=float(sum(weight * risk.lipschitz for weight, risk in zip(p, risks))),
        upper_max=float(upper_max),
    )
