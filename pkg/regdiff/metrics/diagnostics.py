import logging
import math
from typing import Sequence

import numpy as np

from regdiff.errors import NonPositiveValue, TransientNotSettled
from regdiff.metrics.records import RunRecord
from regdiff.risks.data import Sample, SampleBatch

logger = logging.getLogger(__name__)

# Tail windows must agree with the second half of the record to within this fraction
STATIONARITY_TOL = 0.05
MIN_REPETITIONS = 30
Z_95 = 1.96


def centroid_and_disagreement(state, p: np.ndarray) -> tuple[np.ndarray, float]:
    """
    Weighted centroid w_c = sum_k p_k w_k and disagreement sum_k ||w_k - w_c||^2.

    Args:
        state: A NetworkState or an (N, M) array of iterates.
        p (np.ndarray): Perron weights.

    Returns:
        tuple[np.ndarray, float]: The centroid and the disagreement.
    """
    iterates = np.asarray(getattr(state, "iterates", state), dtype=float)
    centroid = np.asarray(p, dtype=float) @ iterates
    deviations = iterates - centroid
    return centroid, float(np.sum(deviations * deviations))


def steady_state_msd(
    records: RunRecord | Sequence[RunRecord], window_fraction: float = 0.2
) -> float:
    """
    Steady-state network MSD: mean over the final window, averaged over repetitions.

    The repetition-averaged curve must be stationary: the window mean has to lie within 5%
    of the mean over the second half of the record.

    Args:
        records (RunRecord | Sequence[RunRecord]): One run or its Monte-Carlo repetitions.
        window_fraction (float): Fraction of the rows forming the tail window.

    Returns:
        float: The steady-state MSD.

    Raises:
        TransientNotSettled: If the record has no iterations or the stationarity check fails.
    """
    if isinstance(records, RunRecord):
        records = [records]
    if not records:
        raise TransientNotSettled("No records to average")
    if not 0 < window_fraction <= 0.5:
        raise ValueError(f"window_fraction must lie in (0, 0.5], got {window_fraction}")

    lengths = {len(record.rows) for record in records}
    if len(lengths) != 1:
        raise ValueError(f"Repetitions have different lengths: {sorted(lengths)}")
    length = lengths.pop()
    if length < 2:
        raise TransientNotSettled("Record has no iterations; run longer")

    curve = np.mean(
        [[row.msd_network for row in record.rows] for record in records], axis=0
    )
    window = max(1, math.ceil(window_fraction * length))
    half = max(1, length // 2)
    window_mean = float(curve[-window:].mean())
    half_mean = float(curve[-half:].mean())

    if abs(window_mean - half_mean) > STATIONARITY_TOL * half_mean:
        raise TransientNotSettled(
            f"Tail window mean {window_mean:.6g} differs from half-record mean {half_mean:.6g} "
            f"by more than {STATIONARITY_TOL:.0%}; run longer"
        )
    return window_mean


def test_error(w: np.ndarray, test_set: SampleBatch | Sequence[Sample]) -> float:
    """
    Fraction of test samples with sign(h^T w) != gamma; ties count as errors.

    Raises:
        ValueError: If the test set is empty.
    """
    batch = test_set if isinstance(test_set, SampleBatch) else SampleBatch.from_samples(test_set)
    if len(batch) == 0:
        raise ValueError("Test set is empty")
    margins = batch.gammas * (batch.features @ np.asarray(w, dtype=float))
    return float(np.mean(margins <= 0))


test_error.__test__ = False  # not a pytest test despite the name


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """
    Least-squares line through (log x, log y).

    Returns:
        tuple[float, float]: Slope and intercept.

    Raises:
        NonPositiveValue: If fewer than 3 points are given or a value is not positive.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise NonPositiveValue(f"loglog_slope needs at least 3 paired points, got {x.size}")
    if np.any(~np.isfinite(x)) or np.any(~np.isfinite(y)) or np.any(x <= 0) or np.any(y <= 0):
        raise NonPositiveValue("loglog_slope needs finite positive values")
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(intercept)


def mean_and_half_width(values: Sequence[float]) -> tuple[float, float]:
    """
    Across-repetition mean and 95% confidence half-width 1.96 * std / sqrt(n).
    """
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise ValueError("Cannot summarize an empty sample")
    if data.size < MIN_REPETITIONS:
        logger.warning(
            f"Confidence interval from {data.size} repetitions; at least {MIN_REPETITIONS} are expected"
        )
    if data.size == 1:
        return float(data[0]), math.nan
    return float(data.mean()), float(Z_95 * data.std(ddof=1) / math.sqrt(data.size))


def final_window_mean(record: RunRecord, field: str, window_fraction: float = 0.2) -> float:
    """
    Mean of one row field over the final window of a single run.
    """
    values = [getattr(row, field) for row in record.rows]
    window = max(1, math.ceil(window_fraction * len(values)))
    return float(np.mean(values[-window:]))
