import logging
from typing import override

import numpy as np

from regdiff.backend.runs import RunJob, execute_all
from regdiff.backend.task import Task, Verdict
from regdiff.errors import TransientNotSettled
from regdiff.metrics.diagnostics import (
    final_window_mean,
    loglog_slope,
    mean_and_half_width,
    steady_state_msd,
)
from regdiff.metrics.export import write_run_csv, write_sweep_csv
from regdiff.metrics.records import SweepPoint, SweepSummary
from regdiff.risks.base import ZeroRisk
from regdiff.risks.moments import noise_moments

logger = logging.getLogger(__name__)


class MsdTask(Task):
    """
    MsdTask sweeps the step size with delta = mu^(1/2 - kappa) and checks that the
    steady-state MSD scales linearly in mu.
    """

    def _log_noise_moments(self):
        """
        Log the fitted gradient-noise moments of the first agent with a nonzero risk.
        """
        experiment = self.experiment
        agent = next((a for a in experiment.agents if not isinstance(a.risk, ZeroRisk)), None)
        if agent is None:
            return
        target = experiment.target_for(max(self._config.algorithm.mu_values()))
        grid = [np.zeros(agent.risk.dimension)]
        if target is not None:
            grid += [0.5 * target, target]
        beta_sq, sigma_sq = noise_moments(
            agent.risk,
            grid,
            self._config.verification.moment_draws,
            np.random.default_rng(self._config.algorithm.seed),
        )
        logger.info(f"Gradient noise moments: beta^2={beta_sq:.4g}, sigma^2={sigma_sq:.4g}")

    @override
    def run(self) -> list[Verdict]:
        """
        Simulate every step size, write sweep.csv and check the log-log slope band.

        Returns:
            list[Verdict]: Stationarity at every mu and the slope criterion.
        """
        experiment = self.experiment
        algorithm = self._config.algorithm
        metrics = self._config.metrics
        low, high = self._config.verification.msd_slope_band
        mus = algorithm.mu_values()
        self._log_noise_moments()

        jobs = []
        for mu in mus:
            target = experiment.target_for(mu)
            initial = target if algorithm.initial == "target" else None
            for variant in algorithm.variants:
                jobs.extend(
                    RunJob(variant=variant, mu=mu, repetition=r, target=target, initial=initial)
                    for r in range(algorithm.repetitions)
                )
        for record in execute_all(experiment, jobs, self._repository, self._workers):
            if metrics.write_runs:
                write_run_csv(record, self.output)

        verdicts = []
        summaries = []
        for variant in algorithm.variants:
            summary = SweepSummary(axis="mu")
            for mu in mus:
                records = self._repository.get_records(
                    lambda r: r.variant == variant and r.axis_value == mu
                )
                try:
                    msd = steady_state_msd(records, metrics.window_fraction)
                except TransientNotSettled as e:
                    verdicts.append(
                        Verdict(criterion=f"{variant} stationary at mu={mu:g}", passed=False, detail=str(e))
                    )
                    continue
                _, half_width = mean_and_half_width(
                    [final_window_mean(r, "msd_network", metrics.window_fraction) for r in records]
                )
                summary.points.append(
                    SweepPoint(value=mu, mean=msd, ci_half_width=half_width, repetitions=len(records))
                )
                logger.info(f"{variant} at mu={mu:g}: steady-state MSD {msd:.6g} +/- {half_width:.3g}")
            summaries.append(summary)

            if len(summary.points) < len(mus):
                continue
            summary.slope, summary.intercept = loglog_slope(
                [point.value for point in summary.points], [point.mean for point in summary.points]
            )
            verdicts.append(
                Verdict(
                    criterion=f"{variant} log-log slope of steady-state MSD against mu in [{low}, {high}]",
                    passed=low <= summary.slope <= high,
                    detail=f"slope {summary.slope:.3f}",
                )
            )

        write_sweep_csv(summaries, self.output / "sweep.csv")
        return verdicts
