import logging
from typing import Literal, override

import numpy as np

from regdiff.risks.base import SmoothRisk
from regdiff.risks.data import NoiseSample, RegressionSample

logger = logging.getLogger(__name__)

NoiseMode = Literal["synthetic", "streaming"]


class QuadraticRisk(SmoothRisk):
    """
    J(w) = w^T H w / 2 - b^T w with two ways of producing stochastic gradients:

    - ``synthetic``: exact gradient plus Normal(0, sigma^2 I) noise.
    - ``streaming``: LMS-style data h = chol(H) xi, gamma = h^T H^{-1} b + v with
      v ~ Normal(0, sigma^2), giving the instantaneous gradient h h^T w - gamma h.
    """

    kind = "quadratic"

    def __init__(
        self,
        hessian: np.ndarray,
        linear: np.ndarray,
        noise: NoiseMode = "synthetic",
        noise_sigma: float = 0.0,
    ):
        """
        Initialize the QuadraticRisk.

        Args:
            hessian (np.ndarray): Symmetric positive semidefinite H.
            linear (np.ndarray): The vector b.
            noise (NoiseMode): How stochastic gradients are produced.
            noise_sigma (float): Standard deviation of the gradient or observation noise.

        Raises:
            ValueError: If H is not symmetric PSD, shapes disagree, or streaming data is
                requested for a singular H.
        """
        H = np.array(hessian, dtype=float, ndmin=2)
        b = np.array(linear, dtype=float, ndmin=1)
        if H.shape != (b.size, b.size):
            raise ValueError(f"Hessian shape {H.shape} does not match linear term of size {b.size}")
        if not np.allclose(H, H.T):
            raise ValueError("Hessian must be symmetric")
        if noise not in ("synthetic", "streaming"):
            raise ValueError(f"Unknown noise mode: {noise}")
        if noise_sigma < 0:
            raise ValueError(f"Noise level must be nonnegative, got {noise_sigma}")

        eigenvalues = np.linalg.eigvalsh(H)
        if eigenvalues[0] < -1e-12:
            raise ValueError("Hessian must be positive semidefinite")

        self._hessian = H
        self._linear = b
        self._noise = noise
        self._noise_sigma = float(noise_sigma)
        self._eigenvalues = eigenvalues

        # Streaming data needs the regression model behind H and b
        self._factor = None
        self._minimizer = None
        if noise == "streaming":
            try:
                self._factor = np.linalg.cholesky(H)
            except np.linalg.LinAlgError as e:
                raise ValueError("Streaming quadratic risks need a positive definite Hessian") from e
            self._minimizer = np.linalg.solve(H, b)

    @property
    @override
    def dimension(self) -> int:
        return self._linear.size

    @property
    @override
    def hessian(self) -> np.ndarray:
        return self._hessian

    @property
    def linear(self) -> np.ndarray:
        return self._linear

    @property
    def noise(self) -> NoiseMode:
        return self._noise

    @property
    def noise_sigma(self) -> float:
        return self._noise_sigma

    @override
    def value(self, w: np.ndarray) -> float:
        return float(0.5 * w @ self._hessian @ w - self._linear @ w)

    @override
    def exact_gradient(self, w: np.ndarray) -> np.ndarray:
        return self._hessian @ w - self._linear

    @override
    def draw(self, rng: np.random.Generator) -> NoiseSample | RegressionSample:
        match self._noise:
            case "synthetic":
                return NoiseSample(noise=self._noise_sigma * rng.standard_normal(self.dimension))
            case "streaming":
                h = self._factor @ rng.standard_normal(self.dimension)
                gamma = float(h @ self._minimizer + self._noise_sigma * rng.standard_normal())
                return RegressionSample(gamma=gamma, h=h)

    @override
    def stochastic_gradient(self, w: np.ndarray, sample: NoiseSample | RegressionSample) -> np.ndarray:
        match sample:
            case NoiseSample(noise=noise):
                return self.exact_gradient(w) + noise
            case RegressionSample(gamma=gamma, h=h):
                return h * (h @ w) - gamma * h
            case _:
                raise TypeError(f"Unexpected sample for a quadratic risk: {type(sample).__name__}")

    @property
    @override
    def lipschitz(self) -> float:
        return float(self._eigenvalues[-1])

    @property
    @override
    def strong_convexity(self) -> float:
        return float(max(self._eigenvalues[0], 0.0))

    def __repr__(self) -> str:
        return (
            f"QuadraticRisk(dimension={self.dimension}, noise={self._noise!r}, "
            f"noise_sigma={self._noise_sigma})"
        )
