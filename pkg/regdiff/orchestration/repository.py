import logging
import threading
from typing import Callable

from regdiff.metrics.records import RecordRow, RunRecord

logger = logging.getLogger(__name__)


class RecordRepository:
    """
    Repository for the run records produced by a task.
    """

    def __init__(self):
        """
        Initialize the RecordRepository.
        """
        # Initialize the records list and its lock
        self._records: list[RunRecord] = []
        self._lock = threading.Lock()

    def add_record(self, record: RunRecord):
        """
        Add a run record to the repository.

        Args:
            record (RunRecord): The record to add.

        Example:
            >>> record = RunRecord(run_id="regularized_diffusion-0", variant="regularized_diffusion")
            >>> repository.add_record(record)
            >>> print(repository.get_records())
        """
        with self._lock:
            # Check if the record is already in the list
            if any(existing.run_id == record.run_id for existing in self._records):
                logger.warning(f"Record with ID {record.run_id} already exists.")
                return

            # Add the record to the list
            self._records.append(record)
        logger.debug(f"Added record with ID {record.run_id} to the repository.")

    def get_records(self, filter: Callable[[RunRecord], bool] | None = None) -> list[RunRecord]:
        """
        Get the records in insertion order.

        Args:
            filter (Callable[[RunRecord], bool], optional): Only records matching the filter are returned.

        Returns:
            list[RunRecord]: The records, optionally filtered.

        Example:
            >>> records = repository.get_records(lambda r: r.variant == "non_cooperative")
        """
        with self._lock:
            if filter:
                return [record for record in self._records if filter(record)]
            return list(self._records)

    def update_record(self, record: RunRecord):
        """
        Replace the stored record that has the same run ID.
        """
        with self._lock:
            for i, existing in enumerate(self._records):
                if existing.run_id == record.run_id:
                    self._records[i] = record
                    return

        # If the record was not found, log a warning
        logger.warning(f"Record with ID {record.run_id} not found for update.")

    def append_row(self, run_id: str, row: RecordRow):
        """
        Append one row to a stored record; usable as a run sink.

        Example:
            >>> repository.add_record(RunRecord(run_id="live", variant="regularized_diffusion"))
            >>> run(agents, A, config, sink=repository.append_row, run_id="live")
        """
        with self._lock:
            for record in self._records:
                if record.run_id == run_id:
                    record.rows.append(row)
                    return
        logger.warning(f"Record with ID {run_id} not found for row {row.iter}.")
