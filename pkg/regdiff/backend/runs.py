import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from regdiff.engine.diffusion import RowSink, run
from regdiff.metrics.records import RunRecord
from regdiff.orchestration.experiment import Experiment
from regdiff.orchestration.models import ExperimentConfig, ExperimentVariant
from regdiff.orchestration.repository import RecordRepository

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunJob:
    """
    One Monte-Carlo run of a variant at a step size.
    """

    variant: ExperimentVariant
    mu: float
    repetition: int
    target: np.ndarray | None = None
    initial: np.ndarray | None = None

    @property
    def run_id(self) -> str:
        return f"{self.variant}-mu{self.mu:g}-rep{self.repetition}"


def execute(experiment: Experiment, job: RunJob, sink: RowSink | None = None) -> RunRecord:
    """
    Run one job against an experiment and label the record with its variant and step size.
    """
    record = run(
        experiment.agents_for(job.variant),
        experiment.matrix,
        experiment.diffusion_config(job.variant, job.mu),
        sink=sink,
        target=job.target,
        test_sets=experiment.test_sets,
        run_id=job.run_id,
        repetition=job.repetition,
        initial=job.initial,
    )
    record.variant = job.variant
    record.axis = "mu"
    record.axis_value = job.mu
    return record


@lru_cache(maxsize=2)
def _worker_experiment(payload: str) -> Experiment:
    return Experiment(ExperimentConfig.model_validate_json(payload))


def _execute_payload(payload: str, job: RunJob) -> RunRecord:
    return execute(_worker_experiment(payload), job)


def execute_all(
    experiment: Experiment,
    jobs: Sequence[RunJob],
    repository: RecordRepository,
    workers: int = 1,
) -> list[RunRecord]:
    """
    Execute jobs, in worker processes when workers > 1, and store their records.

    In a single process every row is streamed into the repository as it is produced, and the
    finished record then replaces the live one. Workers rebuild the experiment from its
    serialized configuration, so records do not depend on the worker count.

    Args:
        experiment (Experiment): The experiment the jobs belong to.
        jobs (Sequence[RunJob]): Jobs to execute.
        repository (RecordRepository): Where the records are stored.
        workers (int): Number of worker processes.

    Returns:
        list[RunRecord]: One record per job, in the order of ``jobs``.
    """
    if workers <= 1 or len(jobs) <= 1:
        records = []
        for index, job in enumerate(jobs, start=1):
            repository.add_record(
                RunRecord(
                    run_id=job.run_id,
                    variant=job.variant,
                    repetition=job.repetition,
                    axis="mu",
                    axis_value=job.mu,
                )
            )
            record = execute(experiment, job, sink=repository.append_row)
            repository.update_record(record)
            records.append(record)
            logger.info(f"Finished run {job.run_id} ({index}/{len(jobs)})")
        return records

    payload = experiment.config.model_dump_json()
    records: list[RunRecord | None] = [None] * len(jobs)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {
            executor.submit(_execute_payload, payload, job): index for index, job in enumerate(jobs)
        }
        for done, future in enumerate(as_completed(futures), start=1):
            index = futures[future]
            records[index] = future.result()
            logger.info(f"Finished run {jobs[index].run_id} ({done}/{len(jobs)})")

    for record in records:
        repository.add_record(record)
    return records
