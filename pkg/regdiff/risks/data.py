import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class Sample:
    """
    A labelled feature vector with a binary class gamma in {-1, +1}.
    """

    gamma: float
    h: np.ndarray

    def __post_init__(self):
        if self.gamma not in (-1, 1):
            raise ValueError(f"Class label must be -1 or +1, got {self.gamma}")


@dataclass(frozen=True, slots=True)
class RegressionSample:
    """
    A streaming regression pair (gamma, h) with real-valued gamma.
    """

    gamma: float
    h: np.ndarray


@dataclass(frozen=True, slots=True)
class NoiseSample:
    """
    Additive gradient noise for the synthetic-noise mode.
    """

    noise: np.ndarray


@dataclass(frozen=True)
class SampleBatch:
    """
    A stacked set of labelled samples: gammas of shape (n,), features of shape (n, M).
    """

    gammas: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        if self.gammas.shape[0] != self.features.shape[0]:
            raise ValueError("Batch needs one label per feature row")

    def __len__(self) -> int:
        return self.gammas.shape[0]

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "SampleBatch":
        if not samples:
            raise ValueError("Cannot build a batch from an empty list of samples")
        return cls(
            gammas=np.array([sample.gamma for sample in samples], dtype=float),
            features=np.stack([sample.h for sample in samples]),
        )


def make_template(dimension: int, informative: int) -> np.ndarray:
    """
    Class template with ``informative`` leading ones followed by zeros.
    """
    if not 0 < informative <= dimension:
        raise ValueError(f"Informative count {informative} must lie in 1..{dimension}")
    template = np.zeros(dimension)
    template[:informative] = 1.0
    return template


class DataModel:
    """
    Feature model h = gamma * template + v with gamma uniform on {-1, +1}
    and v ~ Normal(0, sigma^2 I).
    """

    def __init__(self, template: np.ndarray, noise_sigma: float):
        if noise_sigma < 0:
            raise ValueError(f"Noise level must be nonnegative, got {noise_sigma}")
        self._template = np.asarray(template, dtype=float)
        self._noise_sigma = float(noise_sigma)

    @property
    def template(self) -> np.ndarray:
        return self._template

    @property
    def noise_sigma(self) -> float:
        return self._noise_sigma

    @property
    def dimension(self) -> int:
        return self._template.size

    def draw(self, rng: np.random.Generator) -> Sample:
        gamma = 1.0 if rng.random() < 0.5 else -1.0
        h = gamma * self._template + self._noise_sigma * rng.standard_normal(self.dimension)
        return Sample(gamma=gamma, h=h)

    def draw_batch(self, rng: np.random.Generator, size: int) -> SampleBatch:
        gammas = np.where(rng.random(size) < 0.5, 1.0, -1.0)
        noise = rng.standard_normal((size, self.dimension))
        features = gammas[:, None] * self._template[None, :] + self._noise_sigma * noise
        return SampleBatch(gammas=gammas, features=features)

    def __repr__(self) -> str:
        return f"DataModel(dimension={self.dimension}, noise_sigma={self._noise_sigma})"


@lru_cache(maxsize=8)
def standard_normal_bank(dimension: int, size: int, seed: int) -> np.ndarray:
    """
    A read-only (size, dimension) bank of standard normal draws, shared by every risk that
    asks for the same shape and seed.
    """
    logger.debug(f"Drawing evaluation bank of {size} x {dimension} with seed {seed}")
    bank = np.random.default_rng(seed).standard_normal((size, dimension))
    bank.setflags(write=False)
    return bank
