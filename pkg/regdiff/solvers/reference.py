import logging
import math
from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from regdiff.config import ORACLE_MAX_ITER, ORACLE_TOL, SUBGRADIENT_TOL
from regdiff.engine.diffusion import regularizer_gradient
from regdiff.engine.models import AgentSpec
from regdiff.errors import NonConvergence, SubgradientInfeasible
from regdiff.risks.base import aggregate_curvature
from regdiff.smoothing.proximity import QuadraticProximity, smooth_eval
from regdiff.smoothing.regularizers import aggregate_regularizer, check_delta

logger = logging.getLogger(__name__)


class OracleSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    w_star: np.ndarray
    objective: float
    residual: float  # first-order optimality measure at w_star
    iterations: int


def _risk_gradient(agents: Sequence[AgentSpec], p: np.ndarray, w: np.ndarray) -> np.ndarray:
    total = np.zeros_like(w)
    for weight, agent in zip(p, agents):
        total += weight * agent.risk.exact_gradient(w)
    return total


def _accelerated(
    gradient: Callable[[np.ndarray], np.ndarray],
    prox: Callable[[np.ndarray, float], np.ndarray],
    step: float,
    start: np.ndarray,
    residual_scale: float,
    tol: float,
    max_iter: int,
    label: str,
) -> tuple[np.ndarray, float, int]:
    """
    Accelerated proximal gradient with gradient-based adaptive restart.

    Stops at the first extrapolated point y whose prox-gradient step is shorter than
    tol / residual_scale, and returns y with its residual.
    """
    w = start.copy()
    y = start.copy()
    t = 1.0
    for iteration in range(1, max_iter + 1):
        w_next = prox(y - step * gradient(y), step)
        residual = residual_scale * float(np.linalg.norm(w_next - y))
        if residual < tol:
            return y, residual, iteration

        # Restart the momentum when it points against the prox-gradient step
        if np.dot(y - w_next, w_next - w) > 0:
            t = 1.0
            y = w_next
        else:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = w_next + ((t - 1.0) / t_next) * (w_next - w)
            t = t_next
        w = w_next

    raise NonConvergence(f"{label} did not reach tolerance {tol:.0e} in {max_iter} iterations")


def _strongly_convex_curvature(agents: Sequence[AgentSpec], p: np.ndarray):
    curvature = aggregate_curvature([agent.risk for agent in agents], p)
    if curvature.lower <= 0:
        raise ValueError(
            "The p-weighted aggregate risk is not strongly convex; the oracle needs lambda_L > 0"
        )
    return curvature


def solve_nonsmooth(
    agents: Sequence[AgentSpec],
    p: np.ndarray,
    tol: float = ORACLE_TOL,
    max_iter: int = ORACLE_MAX_ITER,
) -> OracleSolution:
    """
    Minimize sum_k p_k (J_k + R_k) by accelerated proximal gradient on exact risk gradients.

    The prox of sum_k p_k R_k comes from aggregate_regularizer; the step is 1/lambda_U of the
    aggregate risk, and the iteration stops once ||w - prox(w - step grad(w))|| < tol.

    Args:
        agents (Sequence[AgentSpec]): Agent risks and regularizers.
        p (np.ndarray): Perron weights.
        tol (float): Residual tolerance.
        max_iter (int): Iteration cap.

    Returns:
        OracleSolution: The Pareto minimizer w°.

    Raises:
        NonConvergence: If the cap is reached.
        NonSeparableSum: If sum_k p_k R_k has no closed-form prox.
        ValueError: If the aggregate risk is not strongly convex.

    Example:
        >>> solution = solve_nonsmooth(agents, A.perron)
        >>> solution.w_star
    """
    dimension = agents[0].risk.dimension
    curvature = _strongly_convex_curvature(agents, p)
    aggregate = aggregate_regularizer(
        [(weight, agent.regularizer) for weight, agent in zip(p, agents)], dimension
    )

    w, residual, iterations = _accelerated(
        gradient=lambda w: _risk_gradient(agents, p, w),
        prox=aggregate.prox,
        step=1.0 / curvature.upper,
        start=np.zeros(dimension),
        residual_scale=1.0,
        tol=tol,
        max_iter=max_iter,
        label="Non-smooth oracle",
    )
    objective = sum(
        weight * (agent.risk.value(w) + agent.regularizer.evaluate(w))
        for weight, agent in zip(p, agents)
    )
    logger.info(f"Non-smooth oracle converged in {iterations} iterations (residual {residual:.2e})")
    return OracleSolution(w_star=w, objective=float(objective), residual=residual, iterations=iterations)


def smoothed_gradient(
    agents: Sequence[AgentSpec], p: np.ndarray, delta: float, w: np.ndarray
) -> np.ndarray:
    """
    Gradient of the smoothed aggregate sum_k p_k (J_k + R_k^delta) at w.
    """
    total = np.zeros_like(w)
    for weight, agent in zip(p, agents):
        total += weight * (agent.risk.exact_gradient(w) + regularizer_gradient(agent, w, delta))
    return total


def smoothed_objective(
    agents: Sequence[AgentSpec], p: np.ndarray, delta: float, w: np.ndarray
) -> float:
    return float(
        sum(
            weight * (agent.risk.value(w) + smooth_eval(agent.regularizer, w, delta, agent.proximity))
            for weight, agent in zip(p, agents)
        )
    )


def solve_smoothed(
    agents: Sequence[AgentSpec],
    p: np.ndarray,
    delta: float,
    tol: float = ORACLE_TOL,
    max_iter: int = ORACLE_MAX_ITER,
) -> OracleSolution:
    """
    Minimize the smoothed aggregate sum_k p_k (J_k + R_k^delta) until its gradient norm < tol.

    Uses accelerated gradient descent with step 1/(lambda_U + 1/delta), the Lipschitz constant
    of the smoothed aggregate gradient.

    Raises:
        NonPositiveDelta: If delta <= 0.
        NonConvergence: If the cap is reached.
        ValueError: If the aggregate risk is not strongly convex.
    """
    check_delta(delta)
    dimension = agents[0].risk.dimension
    curvature = _strongly_convex_curvature(agents, p)
    step = 1.0 / (curvature.upper + 1.0 / delta)

    w, residual, iterations = _accelerated(
        gradient=lambda w: smoothed_gradient(agents, p, delta, w),
        prox=lambda w, _: w,
        step=step,
        start=np.zeros(dimension),
        residual_scale=1.0 / step,
        tol=tol,
        max_iter=max_iter,
        label=f"Smoothed oracle (delta={delta:g})",
    )
    logger.info(
        f"Smoothed oracle for delta={delta:g} converged in {iterations} iterations (residual {residual:.2e})"
    )
    return OracleSolution(
        w_star=w,
        objective=smoothed_objective(agents, p, delta, w),
        residual=residual,
        iterations=iterations,
    )


def _water_fill(target: float, weights: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """
    Find the level lam with sum_k weights_k clip(lam, lo_k, hi_k) = target.
    """

    def total(level: float) -> float:
        return float(np.sum(weights * np.clip(level, lo, hi)))

    finite = np.concatenate([lo[np.isfinite(lo)], hi[np.isfinite(hi)], [0.0]])
    breakpoints = np.unique(finite)
    values = np.array([total(b) for b in breakpoints])

    if target < values[0]:
        slope = float(np.sum(weights[np.isneginf(lo)]))
        if slope == 0.0:
            raise SubgradientInfeasible(f"Residual {target:.3e} below the attainable range")
        return breakpoints[0] + (target - values[0]) / slope
    if target > values[-1]:
        slope = float(np.sum(weights[np.isposinf(hi)]))
        if slope == 0.0:
            raise SubgradientInfeasible(f"Residual {target:.3e} above the attainable range")
        return breakpoints[-1] + (target - values[-1]) / slope

    # f is nondecreasing and piecewise linear between breakpoints
    index = int(np.searchsorted(values, target, side="left"))
    if values[index] == target or index == 0:
        return float(breakpoints[index])
    left, right = breakpoints[index - 1], breakpoints[index]
    fraction = (target - values[index - 1]) / (values[index] - values[index - 1])
    return float(left + fraction * (right - left))


def recover_subgradients(
    agents: Sequence[AgentSpec], p: np.ndarray, w_star: np.ndarray
) -> list[np.ndarray]:
    """
    Recover subgradients r_k of R_k at w° with sum_k p_k (grad J_k(w°) + r_k) = 0.

    Coordinates where a regularizer is differentiable have their subgradient forced. The rest
    of the residual is split so that every agent whose interval allows it takes the same value,
    which makes each agent's share proportional to p_k.

    Raises:
        SubgradientInfeasible: If no admissible allocation exists within tolerance.
        UnsupportedRegularizer: If a regularizer is not coordinate-separable.
    """
    w_star = np.asarray(w_star, dtype=float)
    p = np.asarray(p, dtype=float)
    gradients = np.array([agent.risk.exact_gradient(w_star) for agent in agents])
    bounds = [agent.regularizer.subdifferential_bounds(w_star) for agent in agents]
    lo = np.array([bound[0] for bound in bounds])
    hi = np.array([bound[1] for bound in bounds])
    residual = -(p @ gradients)

    subgradients = np.zeros_like(gradients)
    for i in range(w_star.size):
        low_sum = float(np.sum(p * lo[:, i]))
        high_sum = float(np.sum(p * hi[:, i]))
        # Clamp round-off from an oracle that is optimal only to its tolerance
        target = residual[i]
        if low_sum - SUBGRADIENT_TOL <= target < low_sum:
            target = low_sum
        elif high_sum < target <= high_sum + SUBGRADIENT_TOL:
            target = high_sum
        level = _water_fill(target, p, lo[:, i], hi[:, i])
        subgradients[:, i] = np.clip(level, lo[:, i], hi[:, i])

    # Validate the allocation
    if np.any(subgradients < lo - SUBGRADIENT_TOL) or np.any(subgradients > hi + SUBGRADIENT_TOL):
        raise SubgradientInfeasible("Recovered subgradient leaves an agent's subdifferential")
    stationarity = np.max(np.abs(p @ (gradients + subgradients)))
    if stationarity > SUBGRADIENT_TOL:
        raise SubgradientInfeasible(
            f"Recovered subgradients violate stationarity by {stationarity:.3e}"
        )
    return list(subgradients)


def bias_bound_rhs(
    agents: Sequence[AgentSpec],
    p: np.ndarray,
    delta: float,
    r_star: Sequence[np.ndarray],
    lam_l: float | None = None,
) -> float:
    """
    Smoothing-bias bound delta * (2 / lambda_L) * sum_k p_k d(r_k°).

    Args:
        agents (Sequence[AgentSpec]): Agents, whose proximity functions define d.
        p (np.ndarray): Perron weights.
        delta (float): Smoothing parameter.
        r_star (Sequence[np.ndarray]): Subgradients from recover_subgradients.
        lam_l (float, optional): Strong convexity of the aggregate; estimated when omitted.

    Returns:
        float: The right-hand side of the bias bound.
    """
    check_delta(delta)
    if lam_l is None:
        lam_l = _strongly_convex_curvature(agents, p).lower
    total = sum(
        weight * (agent.proximity or QuadraticProximity()).evaluate(r)
        for weight, agent, r in zip(p, agents, r_star)
    )
    return float(delta * (2.0 / lam_l) * total)
