import logging
import math
from typing import override

import numpy as np

from regdiff.backend.task import Task, Verdict
from regdiff.config import CONTRACTION_ORACLE_TOL
from regdiff.engine.diffusion import max_contractive_step, step_centralized
from regdiff.engine.models import DiffusionConfig
from regdiff.errors import DivergenceDetected
from regdiff.metrics.export import write_sweep_csv
from regdiff.metrics.records import SweepPoint, SweepSummary

logger = logging.getLogger(__name__)

# Slack on gamma_c for measured step ratios
RATIO_SLACK = 1e-6


class ContractionTask(Task):
    """
    ContractionTask iterates the centralized recursion T_c from a unit perturbation of w_delta°
    and compares the measured step ratios with the contraction factor gamma_c.
    """

    def _step_sizes(self, delta: float) -> list[float]:
        verification = self._config.verification
        if verification.mu_values is not None:
            return list(verification.mu_values)

        curvature = self.experiment.curvature
        if curvature.lower <= 0:
            raise ValueError("Contraction step sizes need a strongly convex aggregate risk")
        mu_star = max_contractive_step(delta, curvature.lower, curvature.upper_max)
        logger.info(f"Largest contractive step mu*={mu_star:.6g} at delta={delta:g}")
        return [factor * mu_star for factor in verification.mu_factors]

    def _ratios(
        self, start: np.ndarray, fixed_point: np.ndarray, config: DiffusionConfig
    ) -> tuple[list[float], int | None]:
        """
        Step ratios ||w_{i+1} - w°|| / ||w_i - w°|| while the distance stays above the floor,
        together with the step at which the iterates diverged, if they did.
        """
        floor = self._config.verification.contraction_floor
        agents, p = self.experiment.agents, self.experiment.p
        w = start
        distance = float(np.linalg.norm(w - fixed_point))
        ratios = []
        for step in range(1, config.n_iterations + 1):
            if distance <= floor:
                break
            try:
                w = step_centralized(w, agents, p, config)
            except DivergenceDetected:
                return ratios, step
            next_distance = float(np.linalg.norm(w - fixed_point))
            ratios.append(next_distance / distance)
            distance = next_distance
        return ratios, None

    @override
    def run(self) -> list[Verdict]:
        """
        Measure step ratios at every configured step size and write sweep.csv (max ratio per mu).

        Returns:
            list[Verdict]: One criterion per contractive step size, one report per other step size.
        """
        experiment = self.experiment
        algorithm = self._config.algorithm
        verification = self._config.verification
        delta = algorithm.delta

        fixed_point = experiment.smoothed_solution(delta, tol=CONTRACTION_ORACLE_TOL).w_star
        direction = np.random.default_rng(algorithm.seed).standard_normal(fixed_point.size)
        start = fixed_point + direction / np.linalg.norm(direction)

        verdicts = []
        points = []
        for mu in self._step_sizes(delta):
            gamma = experiment.contraction_factor(mu, delta)
            config = DiffusionConfig(
                mu=mu,
                delta=delta,
                n_iterations=verification.contraction_steps,
                variant="centralized_reference",
                seed=algorithm.seed,
                exact_gradients=True,
            )
            ratios, diverged_at = self._ratios(start, fixed_point, config)
            max_ratio = max(ratios) if ratios else math.nan
            if diverged_at is not None:
                max_ratio = math.inf
            points.append(SweepPoint(value=mu, mean=max_ratio, ci_half_width=math.nan, repetitions=len(ratios)))
            logger.info(
                f"mu={mu:.6g}: gamma_c={gamma:.6g}, max ratio {max_ratio:.6g} over {len(ratios)} steps"
            )

            if gamma < 1:
                verdicts.append(
                    Verdict(
                        criterion=f"step ratio <= gamma_c + {RATIO_SLACK:g} at mu={mu:.6g}",
                        passed=diverged_at is None and max_ratio <= gamma + RATIO_SLACK,
                        detail=f"max ratio {max_ratio:.6f}, gamma_c {gamma:.6f}, {len(ratios)} steps",
                    )
                )
                continue

            # gamma_c >= 1 gives no guarantee; report what the recursion did
            if diverged_at is not None:
                behaviour = f"diverged at step {diverged_at}"
            elif max_ratio >= 1:
                behaviour = f"non-contracting, max ratio {max_ratio:.6f}"
            else:
                behaviour = f"contracting, max ratio {max_ratio:.6f}"
            verdicts.append(
                Verdict(
                    criterion=f"gamma_c={gamma:.4g} >= 1 at mu={mu:.6g}, contraction not guaranteed",
                    passed=diverged_at is None and max_ratio < 1,
                    detail=behaviour,
                    informational=True,
                )
            )

        write_sweep_csv(SweepSummary(axis="mu", points=points), self.output / "sweep.csv")
        return verdicts
