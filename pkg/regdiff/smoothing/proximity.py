import logging
from abc import ABC, abstractmethod
from typing import override

import numpy as np

from regdiff.config import GENERIC_PROXIMITY_MAX_DIM, INNER_MAX_ITER, INNER_TOL
from regdiff.errors import DimensionTooLargeForGenericProximity, NoConvergence
from regdiff.smoothing.regularizers import Regularizer, check_delta

logger = logging.getLogger(__name__)


class ProximityFunction(ABC):
    """
    A 1-strongly convex function d with min d = d(0) = 0, used to smooth the conjugate R*.
    """

    @abstractmethod
    def evaluate(self, u: np.ndarray) -> float:
        pass

    @abstractmethod
    def gradient(self, u: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def conjugate(self, v: np.ndarray) -> float:
        pass

    @abstractmethod
    def conjugate_gradient(self, v: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def smoothness(self, dim: int) -> float:
        """
        Lipschitz constant of the gradient of d.
        """

    @property
    def is_quadratic(self) -> bool:
        return False

    def check_normalized(self, dim: int, draws: int = 32, seed: int = 0):
        """
        Check min d = d(0) = 0, which makes d*(0) = 0, and the 1-strong convexity lower bound
        d(u) >= ||u||^2 / 2 on random points.

        Args:
            dim (int): Dimension to check in.
            draws (int): Number of random points for the lower bound.
            seed (int): Seed of the random points.

        Raises:
            ValueError: If d(0) or d*(0) is not zero, or d falls below ||u||^2 / 2.
        """
        origin = np.zeros(dim)
        if abs(self.evaluate(origin)) > 1e-12 or abs(self.conjugate(origin)) > 1e-12:
            raise ValueError(f"{type(self).__name__} is not normalized: d(0) and d*(0) must be 0")

        rng = np.random.default_rng(seed)
        for u in rng.standard_normal((draws, dim)):
            floor = 0.5 * float(np.dot(u, u))
            if self.evaluate(u) < floor * (1.0 - 1e-12):
                raise ValueError(
                    f"{type(self).__name__} is not 1-strongly convex: "
                    f"d(u) = {self.evaluate(u):.6g} < ||u||^2/2 = {floor:.6g}"
                )


class QuadraticProximity(ProximityFunction):
    """
    d(u) = ||u||^2 / 2, which turns the smooth approximation into the Moreau envelope.
    """

    @override
    def evaluate(self, u: np.ndarray) -> float:
        return 0.5 * float(np.dot(u, u))

    @override
    def gradient(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float)

    @override
    def conjugate(self, v: np.ndarray) -> float:
        return 0.5 * float(np.dot(v, v))

    @override
    def conjugate_gradient(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float)

    @override
    def smoothness(self, dim: int) -> float:
        return 1.0

    @property
    @override
    def is_quadratic(self) -> bool:
        return True

    def __repr__(self) -> str:
        return "QuadraticProximity()"


class WeightedQuadraticProximity(ProximityFunction):
    """
    d(u) = sum_i c_i u_i^2 / 2 with every c_i >= 1.
    """

    def __init__(self, weights):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or np.any(weights < 1.0):
            raise ValueError("Weighted quadratic proximity needs a vector of weights >= 1")
        self._weights = weights

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @override
    def evaluate(self, u: np.ndarray) -> float:
        return 0.5 * float(np.sum(self._weights * np.square(u)))

    @override
    def gradient(self, u: np.ndarray) -> np.ndarray:
        return self._weights * u

    @override
    def conjugate(self, v: np.ndarray) -> float:
        return 0.5 * float(np.sum(np.square(v) / self._weights))

    @override
    def conjugate_gradient(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) / self._weights

    @override
    def smoothness(self, dim: int) -> float:
        return float(np.max(self._weights))

    def __repr__(self) -> str:
        return f"WeightedQuadraticProximity(weights={self._weights.tolist()})"


def moreau_gradient(R: Regularizer, w: np.ndarray, delta: float) -> np.ndarray:
    """
    Gradient of the Moreau envelope of R, (w - prox_{delta R}(w)) / delta.

    Raises:
        NonPositiveDelta: If delta <= 0.
    """
    check_delta(delta)
    w = np.asarray(w, dtype=float)
    return (w - R.prox(w, delta)) / delta


def smooth_eval(
    R: Regularizer, w: np.ndarray, delta: float, d: ProximityFunction | None = None
) -> float:
    """
    Evaluate the smooth approximation R^delta(w) = min_u { R(u) + delta d*((w - u) / delta) }.

    For quadratic d this is the Moreau envelope in closed form. Any other d goes through a
    proximal gradient inner solver on u, restricted to small dimensions.

    Args:
        R (Regularizer): The regularizer.
        w (np.ndarray): The evaluation point.
        delta (float): Smoothing parameter.
        d (ProximityFunction, optional): Proximity function, quadratic by default.

    Returns:
        float: The smoothed value.

    Raises:
        NonPositiveDelta: If delta <= 0.
        DimensionTooLargeForGenericProximity: If d is not quadratic and dim(w) exceeds the limit.
    """
    check_delta(delta)
    w = np.asarray(w, dtype=float)
    d = d or QuadraticProximity()

    if d.is_quadratic:
        u = R.prox(w, delta)
        return float(R.evaluate(u) + np.dot(w - u, w - u) / (2.0 * delta))

    _check_generic_dimension(w.size)
    d.check_normalized(w.size)

    # The coupling term has a (1/delta)-Lipschitz gradient in u since d* is 1-smooth
    u = R.prox(w, delta)
    for _ in range(INNER_MAX_ITER):
        coupling_gradient = -d.conjugate_gradient((w - u) / delta)
        candidate = R.prox(u - delta * coupling_gradient, delta)
        step = np.linalg.norm(candidate - u)
        u = candidate
        if step <= INNER_TOL * max(1.0, np.linalg.norm(u)):
            break
    else:
        raise NoConvergence(f"Inner solver for smooth_eval did not converge in {INNER_MAX_ITER} steps")

    return float(R.evaluate(u) + delta * d.conjugate((w - u) / delta))


def conjugate_smooth_gradient_oracle(
    R: Regularizer, w: np.ndarray, delta: float, d: ProximityFunction | None = None
) -> np.ndarray:
    """
    Gradient of R^delta as the maximizer of w^T u - R*(u) - delta d(u).

    Solved by proximal gradient ascent using the closed-form prox of R*. Intended as an
    independent cross-check of moreau_gradient and as the gradient for non-quadratic d.

    Args:
        R (Regularizer): The regularizer; its conjugate must be available in closed form.
        w (np.ndarray): The evaluation point.
        delta (float): Smoothing parameter.
        d (ProximityFunction, optional): Proximity function, quadratic by default.

    Returns:
        np.ndarray: The maximizing u.

    Raises:
        NonPositiveDelta: If delta <= 0.
        DimensionTooLargeForGenericProximity: If dim(w) exceeds the limit.
        ConjugateUnavailable: If R has no closed-form conjugate.
    """
    check_delta(delta)
    w = np.asarray(w, dtype=float)
    d = d or QuadraticProximity()
    _check_generic_dimension(w.size)
    d.check_normalized(w.size)

    step = 1.0 / (delta * d.smoothness(w.size))
    u = np.zeros_like(w)
    for _ in range(INNER_MAX_ITER):
        candidate = R.conjugate_prox(u - step * (delta * d.gradient(u) - w), step)
        change = np.linalg.norm(candidate - u)
        u = candidate
        if change <= INNER_TOL * max(1.0, np.linalg.norm(u)):
            return u

    raise NoConvergence(f"Conjugate oracle did not converge in {INNER_MAX_ITER} steps")


def _check_generic_dimension(dim: int):
    if dim > GENERIC_PROXIMITY_MAX_DIM:
        raise DimensionTooLargeForGenericProximity(
            f"Numerical smoothing is limited to dimension {GENERIC_PROXIMITY_MAX_DIM}, got {dim}"
        )


class SmoothedRegularizer:
    """
    R^delta for a fixed regularizer, smoothing parameter and proximity function.

    The gradient is (1/delta)-Lipschitz and delta-co-coercive.
    """

    def __init__(self, base: Regularizer, delta: float, proximity: ProximityFunction | None = None):
        check_delta(delta)
        self._base = base
        self._delta = float(delta)
        self._proximity = proximity or QuadraticProximity()

    @property
    def base(self) -> Regularizer:
        return self._base

    @property
    def delta(self) -> float:
        return self._delta

    @property
    def proximity(self) -> ProximityFunction:
        return self._proximity

    def gradient(self, w: np.ndarray) -> np.ndarray:
        if self._proximity.is_quadratic:
            return moreau_gradient(self._base, w, self._delta)
        return conjugate_smooth_gradient_oracle(self._base, w, self._delta, self._proximity)

    def evaluate(self, w: np.ndarray) -> float:
        return smooth_eval(self._base, w, self._delta, self._proximity)

    def __repr__(self) -> str:
        return f"SmoothedRegularizer(base={self._base!r}, delta={self._delta}, proximity={self._proximity!r})"
