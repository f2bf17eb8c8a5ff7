import logging
from abc import ABC, abstractmethod
from pathlib import Path

from pydantic import BaseModel

from regdiff.orchestration.experiment import Experiment
from regdiff.orchestration.models import ExperimentConfig
from regdiff.orchestration.repository import RecordRepository

logger = logging.getLogger(__name__)


class Verdict(BaseModel):
    """
    Outcome of one acceptance criterion checked by a task.
    """

    criterion: str
    passed: bool
    detail: str = ""
    informational: bool = False  # reported without affecting the exit status

    def __str__(self) -> str:
        label = "INFO" if self.informational else ("PASS" if self.passed else "FAIL")
        return f"[{label}] {self.criterion}" + (f": {self.detail}" if self.detail else "")


class Task(ABC):
    """
    Abstract base class for tasks.
    """

    def __init__(
        self,
        repository: RecordRepository,
        config: ExperimentConfig,
        name: str,
        workers: int = 1,
    ):
        """
        Initialize the Task with a record repository, configuration, name and worker count.

        Args:
            repository (RecordRepository): Where the task stores its run records.
            config (ExperimentConfig): The validated configuration.
            name (str): The name of the task.
            workers (int): Number of worker processes for independent runs.
        """
        self._repository = repository
        self._config = config
        self._name = name
        self._workers = max(1, workers)
        self._experiment: Experiment | None = None

    def __enter__(self):
        """
        Enter the context of the Task.
        Initializes the task when entering the context.
        """
        self.initialize()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """
        Exit the context of the Task.

        Args:
            exc_type: The exception type.
            exc_val: The exception value.
            exc_tb: The traceback object.
        """
        self.close()

    @property
    def name(self) -> str:
        return self._name

    @property
    def output(self) -> Path:
        return Path(self._config.output)

    def initialize(self):
        """
        Build the experiment and create the output directory.
        This method should be called before running the task.
        """
        self._experiment = Experiment(self._config)
        self.output.mkdir(parents=True, exist_ok=True)

    def close(self):
        """
        Release the experiment once the task is no longer needed.
        """
        self._experiment = None
        logger.debug(f"Task {self._name} released its experiment.")

    @property
    def experiment(self) -> Experiment:
        if self._experiment is None:
            raise RuntimeError(f"Task {self._name} is not initialized")
        return self._experiment

    @abstractmethod
    def run(self) -> list[Verdict]:
        """
        Abstract method to run the task.
        Subclasses write their outputs and return the criteria they checked.
        """
        pass
