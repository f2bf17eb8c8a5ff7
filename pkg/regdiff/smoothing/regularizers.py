import logging
from abc import ABC, abstractmethod
from functools import lru_cache
from typing import Annotated, Literal, Union, override

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, model_validator

from regdiff.config import INDICATOR_TOL
from regdiff.errors import (
    ConjugateUnavailable,
    NonPositiveDelta,
    NonSeparableSum,
    UnsupportedRegularizer,
)

logger = logging.getLogger(__name__)


def soft_threshold(w: np.ndarray, threshold: float | np.ndarray) -> np.ndarray:
    """
    Elementwise soft-thresholding sign(w) * max(|w| - threshold, 0).
    """
    return np.sign(w) * np.maximum(np.abs(w) - threshold, 0.0)


def check_delta(delta: float):
    if not delta > 0:
        raise NonPositiveDelta(f"Smoothing parameter must be positive, got {delta}")


class Regularizer(BaseModel, ABC):
    """
    A closed convex, possibly non-smooth, regularizer R.

    Concrete kinds are frozen pydantic models tagged by ``kind`` so that they validate
    straight out of an experiment config.
    """

    model_config = ConfigDict(frozen=True)

    @abstractmethod
    def evaluate(self, w: np.ndarray) -> float:
        """
        Evaluate R(w); indicator kinds return +inf outside their set.
        """

    def prox(self, w: np.ndarray, delta: float) -> np.ndarray:
        """
        Compute prox_{delta R}(w) = argmin_u { R(u) + ||w - u||^2 / (2 delta) }.

        Raises:
            NonPositiveDelta: If delta <= 0.
        """
        check_delta(delta)
        return self._prox(np.asarray(w, dtype=float), delta)

    @abstractmethod
    def _prox(self, w: np.ndarray, delta: float) -> np.ndarray:
        pass

    def conjugate(self, v: np.ndarray) -> float:
        """
        Evaluate the convex conjugate R*(v) = sup_u { v^T u - R(u) }.

        Raises:
            ConjugateUnavailable: If the kind has no closed-form conjugate.
        """
        raise ConjugateUnavailable(f"No closed-form conjugate for regularizer {self.kind}")

    def conjugate_prox(self, v: np.ndarray, t: float) -> np.ndarray:
        """
        Compute prox_{t R*}(v) in closed form, without going through prox of R.

        Raises:
            ConjugateUnavailable: If the kind has no closed-form conjugate.
        """
        raise ConjugateUnavailable(f"No closed-form conjugate for regularizer {self.kind}")

    @abstractmethod
    def support(self, dim: int) -> np.ndarray:
        """
        Boolean mask of the coordinates R depends on.
        """

    def subdifferential_bounds(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Coordinate-wise interval [lo, hi] of the subdifferential of a separable R at w.

        Raises:
            UnsupportedRegularizer: If R is not coordinate-separable.
        """
        raise UnsupportedRegularizer(
            f"Subdifferential intervals are only defined for separable kinds, not {self.kind}"
        )


class ZeroRegularizer(Regularizer):
    kind: Literal["zero"] = "zero"

    @override
    def evaluate(self, w: np.ndarray) -> float:
        return 0.0

    @override
    def _prox(self, w: np.ndarray, delta: float) -> np.ndarray:
        return w.copy()

    @override
    def conjugate(self, v: np.ndarray) -> float:
        return 0.0 if np.all(np.abs(v) <= INDICATOR_TOL) else np.inf

    @override
    def conjugate_prox(self, v: np.ndarray, t: float) -> np.ndarray:
        return np.zeros_like(v, dtype=float)

    @override
    def support(self, dim: int) -> np.ndarray:
        return np.zeros(dim, dtype=bool)

    @override
    def subdifferential_bounds(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros_like(w, dtype=float), np.zeros_like(w, dtype=float)


class _L1Family(Regularizer, ABC):
    """
    Regularizers of the form sum_i c_i |w_i| with nonnegative coordinate weights c.
    """

    @abstractmethod
    def coordinate_weights(self, dim: int) -> np.ndarray:
        pass

    @override
    def evaluate(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=float)
        return float(np.sum(self.coordinate_weights(w.size) * np.abs(w)))

    @override
    def _prox(self, w: np.ndarray, delta: float) -> np.ndarray:
        # Zero-weight coordinates pass through unchanged
        return soft_threshold(w, delta * self.coordinate_weights(w.size))

    @override
    def conjugate(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        inside = np.all(np.abs(v) <= self.coordinate_weights(v.size) + INDICATOR_TOL)
        return 0.0 if inside else np.inf

    @override
    def conjugate_prox(self, v: np.ndarray, t: float) -> np.ndarray:
        # Projection onto the box [-c, c]; independent of t
        c = self.coordinate_weights(np.size(v))
        return np.clip(v, -c, c)

    @override
    def support(self, dim: int) -> np.ndarray:
        return self.coordinate_weights(dim) > 0

    @override
    def subdifferential_bounds(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = np.asarray(w, dtype=float)
        c = self.coordinate_weights(w.size)
        lo = np.where(w > 0, c, -c)
        hi = np.where(w < 0, -c, c)
        return lo, hi


class L1(_L1Family):
    kind: Literal["l1"] = "l1"
    rho: NonNegativeFloat

    @override
    def coordinate_weights(self, dim: int) -> np.ndarray:
        return np.full(dim, self.rho)


class GroupL1(_L1Family):
    """
    rho * ||D w||_1 with D the diagonal 0/1 mask selecting ``indices``.
    """

    kind: Literal["group_l1"] = "group_l1"
    rho: NonNegativeFloat
    indices: tuple[int, ...]

    @model_validator(mode="after")
    def _check_indices(self):
        if any(index < 0 for index in self.indices):
            raise ValueError("Group indices must be nonnegative")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("Group indices must be distinct")
        return self

    @override
    def coordinate_weights(self, dim: int) -> np.ndarray:
        return _group_weights(self.indices, self.rho, dim)


@lru_cache(maxsize=1024)
def _group_weights(indices: tuple[int, ...], rho: float, dim: int) -> np.ndarray:
    if indices and max(indices) >= dim:
        raise ValueError(f"Group index {max(indices)} out of range for dimension {dim}")
    weights = np.zeros(dim)
    weights[list(indices)] = rho
    weights.setflags(write=False)
    return weights


class WeightedL1(_L1Family):
    kind: Literal["weighted_l1"] = "weighted_l1"
    weights: tuple[NonNegativeFloat, ...]

    @override
    def coordinate_weights(self, dim: int) -> np.ndarray:
        if dim != len(self.weights):
            raise ValueError(
                f"weighted_l1 has {len(self.weights)} weights but the vector has dimension {dim}"
            )
        return np.asarray(self.weights)


class IndicatorBox(Regularizer):
    kind: Literal["indicator_box"] = "indicator_box"
    lo: float
    hi: float

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.lo > self.hi:
            raise ValueError(f"Box lower bound {self.lo} exceeds upper bound {self.hi}")
        return self

    @override
    def evaluate(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=float)
        inside = np.all(w >= self.lo - INDICATOR_TOL) and np.all(w <= self.hi + INDICATOR_TOL)
        return 0.0 if inside else np.inf

    @override
    def _prox(self, w: np.ndarray, delta: float) -> np.ndarray:
        return np.clip(w, self.lo, self.hi)

    @override
    def conjugate(self, v: np.ndarray) -> float:
        # Support function of the box
        v = np.asarray(v, dtype=float)
        return float(np.sum(np.maximum(self.hi * v, self.lo * v)))

    @override
    def conjugate_prox(self, v: np.ndarray, t: float) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return v - t * np.clip(v / t, self.lo, self.hi)

    @override
    def support(self, dim: int) -> np.ndarray:
        return np.ones(dim, dtype=bool)

    @override
    def subdifferential_bounds(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # Normal cone of the box
        w = np.asarray(w, dtype=float)
        at_hi = np.abs(w - self.hi) <= INDICATOR_TOL
        at_lo = np.abs(w - self.lo) <= INDICATOR_TOL
        lo = np.where(at_lo, -np.inf, 0.0)
        hi = np.where(at_hi, np.inf, 0.0)
        return lo, hi


class IndicatorBall(Regularizer):
    kind: Literal["indicator_ball"] = "indicator_ball"
    radius: PositiveFloat

    @override
    def evaluate(self, w: np.ndarray) -> float:
        return 0.0 if np.linalg.norm(w) <= self.radius + INDICATOR_TOL else np.inf

    @override
    def _prox(self, w: np.ndarray, delta: float) -> np.ndarray:
        norm = np.linalg.norm(w)
        if norm <= self.radius:
            return w.copy()
        return w * (self.radius / norm)

    @override
    def conjugate(self, v: np.ndarray) -> float:
        return float(self.radius * np.linalg.norm(v))

    @override
    def conjugate_prox(self, v: np.ndarray, t: float) -> np.ndarray:
        # Block soft-thresholding by t * radius
        v = np.asarray(v, dtype=float)
        norm = np.linalg.norm(v)
        if norm <= t * self.radius:
            return np.zeros_like(v)
        return v * (1.0 - t * self.radius / norm)

    @override
    def support(self, dim: int) -> np.ndarray:
        return np.ones(dim, dtype=bool)


class WeightedSum(Regularizer):
    """
    sum_j c_j R_j over parts with pairwise disjoint supports; the prox is then the
    concatenation of the parts' proxes on their own coordinates.
    """

    kind: Literal["weighted_sum"] = "weighted_sum"
    parts: tuple[tuple[PositiveFloat, "RegularizerKind"], ...]

    @override
    def evaluate(self, w: np.ndarray) -> float:
        return float(sum(weight * part.evaluate(w) for weight, part in self.parts))

    @override
    def _prox(self, w: np.ndarray, delta: float) -> np.ndarray:
        out = w.copy()
        for (weight, part), mask in zip(self.parts, self._disjoint_supports(w.size)):
            out[mask] = part.prox(w, delta * weight)[mask]
        return out

    @override
    def support(self, dim: int) -> np.ndarray:
        masks = [part.support(dim) for _, part in self.parts]
        return np.logical_or.reduce(masks) if masks else np.zeros(dim, dtype=bool)

    @override
    def subdifferential_bounds(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = np.asarray(w, dtype=float)
        lo, hi = np.zeros(w.size), np.zeros(w.size)
        for (weight, part), mask in zip(self.parts, self._disjoint_supports(w.size)):
            part_lo, part_hi = part.subdifferential_bounds(w)
            lo[mask] = weight * part_lo[mask]
            hi[mask] = weight * part_hi[mask]
        return lo, hi

    def _disjoint_supports(self, dim: int) -> list[np.ndarray]:
        masks = [part.support(dim) for _, part in self.parts]
        if masks and np.any(np.sum(masks, axis=0) > 1):
            raise NonSeparableSum(
                "weighted_sum parts have overlapping supports; no closed-form prox exists"
            )
        return masks


RegularizerKind = Annotated[
    Union[ZeroRegularizer, L1, GroupL1, WeightedL1, IndicatorBox, IndicatorBall, WeightedSum],
    Field(discriminator="kind"),
]
WeightedSum.model_rebuild()


def prox(R: Regularizer, w: np.ndarray, delta: float) -> np.ndarray:
    """
    Proximal map of delta * R at w.

    Args:
        R (Regularizer): The regularizer.
        w (np.ndarray): The point.
        delta (float): Positive scaling.

    Returns:
        np.ndarray: argmin_u { R(u) + ||w - u||^2 / (2 delta) }.

    Raises:
        NonPositiveDelta: If delta <= 0.
        NonSeparableSum: If R is a weighted_sum with overlapping parts.

    Example:
        >>> prox(L1(rho=1.0), np.array([3.0, -0.5]), 1.0)
        array([ 2., -0.])
    """
    return R.prox(w, delta)


def aggregate_regularizer(pairs: list[tuple[float, Regularizer]], dim: int) -> Regularizer:
    """
    Build a single regularizer equal to sum_k p_k R_k with a closed-form prox.

    l1-family terms merge coordinate-wise into one weighted_l1. Identical indicators collapse
    into one. Every remaining term must live on coordinates no other term touches.

    Args:
        pairs (list[tuple[float, Regularizer]]): Weights p_k and regularizers R_k.
        dim (int): Dimension of the decision variable.

    Returns:
        Regularizer: The aggregate regularizer.

    Raises:
        NonSeparableSum: If two non-mergeable terms share a coordinate.
    """
    l1_weights = np.zeros(dim)
    others: list[Regularizer] = []

    pending = [(float(weight), regularizer) for weight, regularizer in pairs]
    while pending:
        weight, regularizer = pending.pop(0)
        if weight == 0:
            continue
        match regularizer:
            case ZeroRegularizer():
                pass
            case WeightedSum(parts=parts):
                pending.extend((weight * inner, part) for inner, part in parts)
            case _L1Family():
                l1_weights += weight * regularizer.coordinate_weights(dim)
            case IndicatorBox() | IndicatorBall():
                # Positive multiples of an indicator are the same indicator
                if regularizer not in others:
                    others.append(regularizer)
            case _:
                raise NonSeparableSum(f"Cannot aggregate regularizer of kind {regularizer.kind}")

    parts: list[Regularizer] = []
    if np.any(l1_weights > 0):
        parts.append(WeightedL1(weights=tuple(l1_weights.tolist())))
    parts.extend(others)

    if not parts:
        return ZeroRegularizer()
    if len(parts) == 1:
        return parts[0]

    aggregate = WeightedSum(parts=tuple((1.0, part) for part in parts))
    # Validate disjointness now rather than on first use
    aggregate._disjoint_supports(dim)
    return aggregate
