import logging
import math

import numpy as np
import pytest
from pydantic import ValidationError

from regdiff.errors import NonPositiveValue, TransientNotSettled
from regdiff.metrics.diagnostics import (
    centroid_and_disagreement,
    final_window_mean,
    loglog_slope,
    mean_and_half_width,
    steady_state_msd,
    test_error,
)
from regdiff.metrics.export import (
    BiasRow,
    SummaryRow,
    format_float,
    write_bias_csv,
    write_run_csv,
    write_summary_csv,
    write_sweep_csv,
)
from regdiff.metrics.records import RecordRow, RunRecord, SweepPoint, SweepSummary, fingerprint
from regdiff.orchestration.repository import RecordRepository
from regdiff.risks.data import SampleBatch


def make_record(values, run_id: str = "r", **fields) -> RunRecord:
    rows = [
        RecordRow(iter=i, msd_network=value, msd_centroid=value, disagreement=0.0)
        for i, value in enumerate(values)
    ]
    return RunRecord(run_id=run_id, variant="regularized_diffusion", rows=rows, **fields)


def test_steady_state_of_a_flat_record():
    assert steady_state_msd(make_record([5.0] * 3 + [1.0] * 50)) == pytest.approx(1.0)


def test_steady_state_averages_repetitions():
    records = [make_record([1.0] * 40, run_id="a"), make_record([3.0] * 40, run_id="b")]
    assert steady_state_msd(records) == pytest.approx(2.0)


def test_steady_state_ignores_prepended_stationary_rows():
    values = [1.0, 3.0] * 25
    assert steady_state_msd(make_record(values * 3)) == pytest.approx(steady_state_msd(make_record(values)))


def test_decaying_record_has_not_settled():
    with pytest.raises(TransientNotSettled):
        steady_state_msd(make_record([0.9**i for i in range(100)]))


def test_record_without_iterations_has_not_settled():
    with pytest.raises(TransientNotSettled):
        steady_state_msd(make_record([1.0]))


def test_repetitions_must_share_a_length():
    with pytest.raises(ValueError):
        steady_state_msd([make_record([1.0] * 10), make_record([1.0] * 11)])


def test_final_window_mean():
    assert final_window_mean(make_record([float(i) for i in range(10)]), "msd_network") == pytest.approx(8.5)


def test_loglog_slope_of_a_power_law():
    slope, intercept = loglog_slope([1.0, 10.0, 100.0], [2.0, 20.0, 200.0])
    assert slope == pytest.approx(1.0)
    assert intercept == pytest.approx(math.log(2.0))


@pytest.mark.parametrize(
    "xs, ys",
    [([1.0, 2.0], [1.0, 2.0]), ([1.0, 2.0, 3.0], [1.0, 0.0, 3.0]), ([1.0, 2.0, 3.0], [1.0, math.nan, 3.0])],
    ids=["too_few", "zero", "nan"],
)
def test_loglog_slope_rejects_bad_points(xs, ys):
    with pytest.raises(NonPositiveValue):
        loglog_slope(xs, ys)


def test_mean_and_half_width(caplog):
    with caplog.at_level(logging.WARNING, logger="regdiff"):
        mean, half_width = mean_and_half_width([1.0, 2.0, 3.0])
    assert mean == pytest.approx(2.0)
    assert half_width == pytest.approx(1.96 / math.sqrt(3.0))
    assert "at least 30" in caplog.text


def test_half_width_of_a_single_value_is_nan():
    mean, half_width = mean_and_half_width([4.0])
    assert mean == 4.0
    assert math.isnan(half_width)


def test_centroid_and_disagreement():
    centroid, disagreement = centroid_and_disagreement(np.array([[0.0], [2.0]]), np.array([0.5, 0.5]))
    np.testing.assert_allclose(centroid, [1.0])
    assert disagreement == pytest.approx(2.0)


def test_weighted_msd_splits_into_centroid_and_disagreement(rng):
    iterates = rng.standard_normal((6, 4))
    target = rng.standard_normal(4)
    p = rng.uniform(0.1, 1.0, 6)
    p /= p.sum()

    centroid, _ = centroid_and_disagreement(iterates, p)
    weighted_msd = float(p @ np.sum((iterates - target) ** 2, axis=1))
    weighted_spread = float(p @ np.sum((iterates - centroid) ** 2, axis=1))
    assert weighted_msd == pytest.approx(float(np.sum((centroid - target) ** 2)) + weighted_spread, abs=1e-10)

    # With uniform weights the spread is the disagreement over N
    uniform = np.full(6, 1.0 / 6)
    centroid, disagreement = centroid_and_disagreement(iterates, uniform)
    mean_msd = float(np.mean(np.sum((iterates - target) ** 2, axis=1)))
    assert mean_msd == pytest.approx(float(np.sum((centroid - target) ** 2)) + disagreement / 6, abs=1e-10)


def test_test_error_counts_ties_as_errors():
    batch = SampleBatch(gammas=np.array([1.0, -1.0, 1.0]), features=np.array([[1.0], [1.0], [-1.0]]))
    assert test_error(np.array([1.0]), batch) == pytest.approx(2.0 / 3.0)
    assert test_error(np.array([0.0]), batch) == 1.0
    with pytest.raises(ValueError):
        test_error(np.array([1.0]), SampleBatch(gammas=np.zeros(0), features=np.zeros((0, 1))))


def test_rows_reject_negative_norms():
    with pytest.raises(ValidationError):
        RecordRow(iter=0, msd_network=-1.0, msd_centroid=0.0, disagreement=0.0)


def test_fingerprint_is_stable():
    assert fingerprint("abc") == fingerprint("abc")
    assert fingerprint("abc") != fingerprint("abd")
    assert len(fingerprint("abc")) == 16


def test_format_float():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(1.0) == "1"
    assert format_float(math.nan) == "nan"


def test_run_csv(tmp_path):
    path = write_run_csv(make_record([0.5, 0.25], run_id="rd-0"), tmp_path)
    assert path.name == "run_rd-0.csv"
    assert path.read_text().splitlines() == [
        "iter,msd_network,msd_centroid,disagreement,test_error",
        "0,0.5,0.5,0,nan",
        "1,0.25,0.25,0,nan",
    ]


def test_sweep_summary_and_bias_csv(tmp_path):
    summary = SweepSummary(
        axis="mu",
        points=[SweepPoint(value=0.001, mean=2.5, ci_half_width=0.125, repetitions=30)],
    )
    sweep = write_sweep_csv(summary, tmp_path / "sweep.csv")
    assert sweep.read_text() == "axis,value,mean,ci_half_width\nmu,0.001,2.5,0.125\n"

    rows = [SummaryRow(variant="non_cooperative", mu=0.05, metric="test_error", mean=0.25, ci_half_width=0.5)]
    text = write_summary_csv(rows, tmp_path / "nested" / "summary.csv").read_text()
    assert text.splitlines()[1] == "non_cooperative,0.050000000000000003,test_error,0.25,0.5"

    bias = write_bias_csv([BiasRow(delta=0.5, bias=0.0, bound=0.5)], tmp_path / "bias_bound.csv")
    assert bias.read_text().splitlines() == ["delta,bias,bound", "0.5,0,0.5"]


def test_repository_keeps_records_in_order(caplog):
    repository = RecordRepository()
    repository.add_record(make_record([1.0], run_id="a", repetition=0))
    repository.add_record(make_record([2.0], run_id="b", repetition=1))
    with caplog.at_level(logging.WARNING, logger="regdiff"):
        repository.add_record(make_record([3.0], run_id="a"))
    assert "already exists" in caplog.text

    assert [record.run_id for record in repository.get_records()] == ["a", "b"]
    assert [record.run_id for record in repository.get_records(lambda r: r.repetition == 1)] == ["b"]


def test_repository_updates_and_streams_rows(caplog):
    repository = RecordRepository()
    repository.add_record(RunRecord(run_id="live", variant="regularized_diffusion"))
    repository.append_row("live", RecordRow(iter=0, msd_network=1.0, msd_centroid=1.0, disagreement=0.0))
    assert len(repository.get_records()[0].rows) == 1

    repository.update_record(make_record([4.0, 5.0], run_id="live"))
    assert len(repository.get_records()[0].rows) == 2

    with caplog.at_level(logging.WARNING, logger="regdiff"):
        repository.update_record(make_record([1.0], run_id="missing"))
        repository.append_row("missing", RecordRow(iter=0, msd_network=0.0, msd_centroid=0.0, disagreement=0.0))
    assert "not found" in caplog.text
