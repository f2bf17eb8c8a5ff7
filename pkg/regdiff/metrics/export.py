import csv
import logging
import math
from pathlib import Path
from typing import Iterable, Sequence

from pydantic import BaseModel

from regdiff.metrics.records import RunRecord, SweepSummary

logger = logging.getLogger(__name__)

RUN_HEADER = ["iter", "msd_network", "msd_centroid", "disagreement", "test_error"]
SWEEP_HEADER = ["axis", "value", "mean", "ci_half_width"]
SUMMARY_HEADER = ["variant", "mu", "metric", "mean", "ci_half_width"]
BIAS_HEADER = ["delta", "bias", "bound"]


class SummaryRow(BaseModel):
    variant: str
    mu: float
    metric: str
    mean: float
    ci_half_width: float


class BiasRow(BaseModel):
    delta: float
    bias: float
    bound: float


def format_float(value: float) -> str:
    """
    Render a float with 17 significant digits; NaN is written as "nan".
    """
    if math.isnan(value):
        return "nan"
    return format(value, ".17g")


def _write(path: Path, header: list[str], rows: Iterable[list[str]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    logger.debug(f"Wrote {path}")
    return path


def write_run_csv(record: RunRecord, directory: Path) -> Path:
    """
    Write one run as run_<id>.csv with columns iter,msd_network,msd_centroid,disagreement,test_error.

    Args:
        record (RunRecord): The run to export.
        directory (Path): Output directory.

    Returns:
        Path: The written file.
    """
    rows = (
        [
            str(row.iter),
            format_float(row.msd_network),
            format_float(row.msd_centroid),
            format_float(row.disagreement),
            format_float(row.test_error),
        ]
        for row in record.rows
    )
    return _write(Path(directory) / f"run_{record.run_id}.csv", RUN_HEADER, rows)


def write_sweep_csv(summaries: SweepSummary | Sequence[SweepSummary], path: Path) -> Path:
    if isinstance(summaries, SweepSummary):
        summaries = [summaries]
    rows = (
        [
            summary.axis,
            format_float(point.value),
            format_float(point.mean),
            format_float(point.ci_half_width),
        ]
        for summary in summaries
        for point in summary.points
    )
    return _write(Path(path), SWEEP_HEADER, rows)


def write_summary_csv(rows: Sequence[SummaryRow], path: Path) -> Path:
    return _write(
        Path(path),
        SUMMARY_HEADER,
        (
            [row.variant, format_float(row.mu), row.metric, format_float(row.mean), format_float(row.ci_half_width)]
            for row in rows
        ),
    )


def write_bias_csv(rows: Sequence[BiasRow], path: Path) -> Path:
    return _write(
        Path(path),
        BIAS_HEADER,
        ([format_float(row.delta), format_float(row.bias), format_float(row.bound)] for row in rows),
    )


def write_resolved_config(config: BaseModel, directory: Path) -> Path:
    """
    Echo the validated configuration as resolved_config.json.
    """
    path = Path(directory) / "resolved_config.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(config.model_dump_json(indent=2))
    logger.info(f"Resolved configuration written to {path}")
    return path


def write_experiment_profile(profile: BaseModel, directory: Path) -> Path:
    """
    Write the realized network and per-agent noise draws as experiment_profile.json.
    """
    path = Path(directory) / "experiment_profile.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(profile.model_dump_json(indent=2))
    logger.info(f"Experiment profile written to {path}")
    return path
