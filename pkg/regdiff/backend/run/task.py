import logging
import math
from typing import override

import numpy as np

from regdiff.backend.runs import RunJob, execute_all
from regdiff.backend.task import Task, Verdict
from regdiff.metrics.diagnostics import final_window_mean, loglog_slope, mean_and_half_width, test_error
from regdiff.metrics.export import SummaryRow, write_run_csv, write_summary_csv, write_sweep_csv
from regdiff.metrics.records import RunRecord, SweepPoint, SweepSummary

logger = logging.getLogger(__name__)

# Variants whose test-error intervals must be strictly ordered, best first
ORDERING = ("regularized_diffusion", "unregularized_diffusion", "non_cooperative")

# Summary variant holding the test error of the nonsmooth minimizer
REFERENCE = "nonsmooth_minimizer"


class RunTask(Task):
    """
    RunTask simulates every configured variant and step size over Monte-Carlo repetitions.
    """

    @override
    def run(self) -> list[Verdict]:
        """
        Run the simulations and write run CSVs, summary.csv and, for single-variant sweeps, sweep.csv.

        Returns:
            list[Verdict]: The final-window test-error ordering at every step size, when the
                regularized, unregularized and non-cooperative variants all run.
        """
        experiment = self.experiment
        algorithm = self._config.algorithm
        mus = algorithm.mu_values()

        # Build the jobs in (variant, mu, repetition) order
        targets = {mu: experiment.target_for(mu) for mu in mus}
        jobs = [
            RunJob(
                variant=variant,
                mu=mu,
                repetition=repetition,
                target=targets[mu],
                initial=targets[mu] if algorithm.initial == "target" else None,
            )
            for variant in algorithm.variants
            for mu in mus
            for repetition in range(algorithm.repetitions)
        ]
        logger.info(f"Task {self._name}: {len(jobs)} runs on {self._workers} worker(s)")

        for record in execute_all(experiment, jobs, self._repository, self._workers):
            if self._config.metrics.write_runs:
                write_run_csv(record, self.output)

        rows = self._summarize()
        write_summary_csv(rows, self.output / "summary.csv")
        self._write_sweep(rows)
        return self._ordering(rows)

    def _records(self, variant: str, mu: float) -> list[RunRecord]:
        return self._repository.get_records(lambda r: r.variant == variant and r.axis_value == mu)

    def _summarize(self) -> list[SummaryRow]:
        window = self._config.metrics.window_fraction
        metrics = ["disagreement"]
        if self._config.metrics.target != "none":
            metrics.insert(0, "msd_network")
        if self.experiment.test_sets is not None:
            metrics.append("test_error")

        rows = []
        for variant in self._config.algorithm.variants:
            for mu in self._config.algorithm.mu_values():
                records = self._records(variant, mu)
                for metric in metrics:
                    mean, half_width = mean_and_half_width(
                        [final_window_mean(record, metric, window) for record in records]
                    )
                    rows.append(
                        SummaryRow(variant=variant, mu=mu, metric=metric, mean=mean, ci_half_width=half_width)
                    )
                    logger.info(f"{variant} at mu={mu:g}: {metric} = {mean:.6g} +/- {half_width:.3g}")
        return rows + self._reference_rows()

    def _reference_rows(self) -> list[SummaryRow]:
        """
        Test error of the minimizer of the nonsmooth aggregate on the per-agent test sets.

        It needs a solved minimizer, so it is only reported when the runs have an MSD target.
        """
        experiment = self.experiment
        if experiment.test_sets is None or self._config.metrics.target == "none":
            return []

        w_star = experiment.nonsmooth_solution.w_star
        error = float(np.mean([test_error(w_star, batch) for batch in experiment.test_sets]))
        logger.info(f"{REFERENCE} test error = {error:.6g}")
        return [
            SummaryRow(variant=REFERENCE, mu=mu, metric="test_error", mean=error, ci_half_width=math.nan)
            for mu in self._config.algorithm.mu_values()
        ]

    def _write_sweep(self, rows: list[SummaryRow]):
        algorithm = self._config.algorithm
        if len(algorithm.variants) != 1 or len(algorithm.mu_values()) < 2:
            return
        points = [
            SweepPoint(
                value=row.mu,
                mean=row.mean,
                ci_half_width=row.ci_half_width,
                repetitions=algorithm.repetitions,
            )
            for row in rows
            if row.metric == "msd_network"
        ]
        if not points:
            return

        summary = SweepSummary(axis="mu", points=points)
        if len(points) >= 3 and all(point.mean > 0 for point in points):
            summary.slope, summary.intercept = loglog_slope(
                [point.value for point in points], [point.mean for point in points]
            )
            logger.info(f"Log-log slope of steady-state MSD against mu: {summary.slope:.3f}")
        write_sweep_csv(summary, self.output / "sweep.csv")

    def _ordering(self, rows: list[SummaryRow]) -> list[Verdict]:
        if not set(ORDERING) <= set(self._config.algorithm.variants):
            return []

        verdicts = []
        for mu in self._config.algorithm.mu_values():
            errors = {
                row.variant: row for row in rows if row.mu == mu and row.metric == "test_error"
            }
            if not errors:
                continue

            # Consecutive intervals must not overlap; a NaN half-width never compares
            holds = all(
                errors[better].mean + errors[better].ci_half_width
                < errors[worse].mean - errors[worse].ci_half_width
                for better, worse in zip(ORDERING, ORDERING[1:])
            )
            detail = ", ".join(
                f"{v} {errors[v].mean:.4f} +/- {errors[v].ci_half_width:.4f}" for v in ORDERING
            )
            if REFERENCE in errors:
                detail += f", {REFERENCE} {errors[REFERENCE].mean:.4f}"
            verdicts.append(
                Verdict(
                    criterion=f"final-window test error ordering at mu={mu:g}",
                    passed=holds,
                    detail=detail,
                )
            )
        return verdicts
