import logging
import math
from typing import override

from regdiff.backend.task import Task, Verdict
from regdiff.metrics.diagnostics import loglog_slope
from regdiff.metrics.export import BiasRow, write_bias_csv, write_sweep_csv
from regdiff.metrics.records import SweepPoint, SweepSummary
from regdiff.solvers.reference import bias_bound_rhs, recover_subgradients

logger = logging.getLogger(__name__)


class BiasTask(Task):
    """
    BiasTask measures ||w° - w_delta°||^2 across a delta sweep against the smoothing-bias bound.
    """

    def _resolution(self) -> float:
        """
        Squared distance below which two oracle solutions are indistinguishable.
        """
        curvature = self.experiment.curvature
        tol = self._config.metrics.oracle_tol
        return (10.0 * tol * max(1.0, curvature.upper) / curvature.lower) ** 2

    @override
    def run(self) -> list[Verdict]:
        """
        Solve both oracles at every delta and write bias_bound.csv and sweep.csv.

        Returns:
            list[Verdict]: The bound criterion and the log-log slope criterion.
        """
        experiment = self.experiment
        agents, p = experiment.agents, experiment.p
        verification = self._config.verification

        solution = experiment.nonsmooth_solution
        r_star = recover_subgradients(agents, p, solution.w_star)
        lam_l = experiment.curvature.lower
        resolution = self._resolution()

        rows = []
        for delta in sorted(verification.deltas, reverse=True):
            smoothed = experiment.smoothed_solution(delta)
            difference = solution.w_star - smoothed.w_star
            bias = float(difference @ difference)
            bound = bias_bound_rhs(agents, p, delta, r_star, lam_l)
            rows.append(BiasRow(delta=delta, bias=bias, bound=bound))
            logger.info(f"delta={delta:g}: bias {bias:.6e}, bound {bound:.6e}")

        write_bias_csv(rows, self.output / "bias_bound.csv")
        summary = SweepSummary(
            axis="delta",
            points=[
                SweepPoint(value=row.delta, mean=row.bias, ci_half_width=math.nan, repetitions=1)
                for row in rows
            ],
        )

        violations = [row for row in rows if row.bias > row.bound + resolution]
        verdicts = [
            Verdict(
                criterion="bias <= bound at every delta",
                passed=not violations,
                detail=", ".join(f"delta={row.delta:g}: {row.bias:.3e} > {row.bound:.3e}" for row in violations),
            )
        ]

        resolved = [row for row in rows if row.bias > resolution]
        if not resolved:
            verdicts.append(
                Verdict(
                    criterion=f"log-log slope of bias against delta >= {verification.bias_slope_min}",
                    passed=True,
                    detail=f"the bias is below the oracle resolution {resolution:.1e} at every delta",
                )
            )
        elif len(resolved) < 3:
            verdicts.append(
                Verdict(
                    criterion=f"log-log slope of bias against delta >= {verification.bias_slope_min}",
                    passed=False,
                    detail=f"only {len(resolved)} delta value(s) give a bias above the oracle resolution",
                )
            )
        else:
            summary.slope, summary.intercept = loglog_slope(
                [row.delta for row in resolved], [row.bias for row in resolved]
            )
            verdicts.append(
                Verdict(
                    criterion=f"log-log slope of bias against delta >= {verification.bias_slope_min}",
                    passed=summary.slope >= verification.bias_slope_min,
                    detail=f"slope {summary.slope:.3f} over {len(resolved)} points",
                )
            )

        write_sweep_csv(summary, self.output / "sweep.csv")
        return verdicts
