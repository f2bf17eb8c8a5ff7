import logging

from regdiff.backend.bias.task import BiasTask
from regdiff.backend.contraction.task import ContractionTask
from regdiff.backend.msd.task import MsdTask
from regdiff.backend.run.task import RunTask
from regdiff.backend.task import Task, Verdict
from regdiff.metrics.export import write_experiment_profile, write_resolved_config
from regdiff.orchestration.models import ExperimentConfig
from regdiff.orchestration.repository import RecordRepository

logger = logging.getLogger(__name__)

TASKS: dict[str, type[Task]] = {
    "run": RunTask,
    "bias": BiasTask,
    "contraction": ContractionTask,
    "msd": MsdTask,
}


class Manager:
    """
    A class to manage one experiment: it echoes the configuration, runs the configured
    task and collects its verdicts.
    """

    def __init__(self, config: ExperimentConfig, workers: int = 1):
        """
        Initialize the Manager with a validated configuration.

        Args:
            config (ExperimentConfig): The configuration; its ``task`` selects what runs.
            workers (int): Number of worker processes for independent runs.

        Example:
            >>> with Manager(load_config("preset:bias-1d")) as manager:
            ...     passed = manager.run()
        """
        logger.info(f"Initializing Manager for {config.name!r} (task {config.task}, {workers} worker(s))")
        self._config = config
        self._repository = RecordRepository()
        self._task: Task = TASKS[config.task](self._repository, config, config.task, workers)
        self._verdicts: list[Verdict] = []

    @property
    def repository(self) -> RecordRepository:
        return self._repository

    @property
    def verdicts(self) -> list[Verdict]:
        return list(self._verdicts)

    def run(self) -> bool:
        """
        Run the task and report its verdicts.

        Returns:
            bool: Whether every non-informational criterion passed.

        Example:
            >>> manager.run()
            [PASS] bias <= bound at every delta
            True
        """
        write_resolved_config(self._config, self._task.output)
        write_experiment_profile(self._task.experiment.profile(), self._task.output)
        self._verdicts = self._task.run()
        for verdict in self._verdicts:
            print(verdict)
            if verdict.informational or verdict.passed:
                logger.info(str(verdict))
            else:
                logger.warning(str(verdict))
        return all(verdict.passed for verdict in self._verdicts if not verdict.informational)

    def __enter__(self):
        """
        Enter the context of the Manager.

        Returns:
            Manager: The instance itself for context management.
        """
        self._task.initialize()
        logger.info(f"Task {self._task.name} initialized.")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """
        Exit the context of the Manager.

        Args:
            exc_type: The type of exception raised, if any.
            exc_val: The value of the exception raised, if any.
            exc_tb: The traceback object, if any.
        """
        self.close()

    def close(self):
        """
        Close the Manager and its task.
        """
        self._task.close()
        logger.info(f"Task {self._task.name} closed.")
        logger.info("Manager closed.")
