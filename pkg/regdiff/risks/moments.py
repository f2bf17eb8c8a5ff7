import logging
from typing import Sequence

import numpy as np

from regdiff.risks.base import SmoothRisk

logger = logging.getLogger(__name__)

MIN_DRAWS = 1000


def noise_moments(
    J: SmoothRisk,
    w_grid: Sequence[np.ndarray],
    n_draws: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """
    Fit the affine gradient-noise bound E||s(w)||^2 <= beta^2 ||w||^2 + sigma^2.

    At every grid point the second moment of s = stochastic_gradient - exact_gradient is
    estimated from n_draws samples; (beta^2, sigma^2) then come from a least-squares fit
    against ||w||^2, clamped to be nonnegative.

    Args:
        J (SmoothRisk): The risk.
        w_grid (Sequence[np.ndarray]): Evaluation points.
        n_draws (int): Draws per grid point, at least 1000.
        rng (np.random.Generator): Source of samples.

    Returns:
        tuple[float, float]: The fitted (beta^2, sigma^2).

    Raises:
        ValueError: If n_draws is below 1000 or the grid is empty.
    """
    if n_draws < MIN_DRAWS:
        raise ValueError(f"noise_moments needs at least {MIN_DRAWS} draws, got {n_draws}")
    if len(w_grid) == 0:
        raise ValueError("noise_moments needs at least one grid point")

    norms_sq = []
    moments = []
    for w in w_grid:
        w = np.asarray(w, dtype=float)
        exact = J.exact_gradient(w)
        total = 0.0
        for _ in range(n_draws):
            noise = J.stochastic_gradient(w, J.draw(rng)) - exact
            total += float(noise @ noise)
        norms_sq.append(float(w @ w))
        moments.append(total / n_draws)

    x = np.asarray(norms_sq)
    y = np.asarray(moments)

    # A grid of equal norms cannot separate the two terms
    if np.ptp(x) == 0.0:
        return 0.0, float(y.mean())

    beta_sq, sigma_sq = np.linalg.lstsq(np.column_stack([x, np.ones_like(x)]), y, rcond=None)[0]
    if beta_sq < 0:
        beta_sq, sigma_sq = 0.0, y.mean()
    elif sigma_sq < 0:
        beta_sq, sigma_sq = (x @ y) / (x @ x), 0.0

    logger.debug(f"Fitted gradient noise moments beta^2={beta_sq:.4g}, sigma^2={sigma_sq:.4g}")
    return float(beta_sq), float(sigma_sq)
