import hashlib
import math

from pydantic import BaseModel, Field, field_validator


class RecordRow(BaseModel):
    iter: int
    msd_network: float  # mean over agents of ||w_k - target||^2
    msd_centroid: float  # ||w_c - target||^2
    disagreement: float  # sum over agents of ||w_k - w_c||^2
    test_error: float = math.nan  # mean over agents, NaN without test sets
    msd_agents: list[float] = []
    test_error_agents: list[float] = []

    @field_validator("msd_network", "msd_centroid", "disagreement")
    @classmethod
    def _nonnegative(cls, value: float) -> float:
        if value < 0:
            raise ValueError(f"Recorded norms must be nonnegative, got {value}")
        return value


class RunRecord(BaseModel):
    run_id: str
    variant: str
    repetition: int = 0
    seed: int = 0
    fingerprint: str = ""
    axis: str | None = None  # sweep axis name, when part of a sweep
    axis_value: float | None = None
    rows: list[RecordRow] = []


class SweepPoint(BaseModel):
    value: float
    mean: float
    ci_half_width: float
    repetitions: int


class SweepSummary(BaseModel):
    axis: str
    points: list[SweepPoint] = []
    slope: float | None = None
    intercept: float | None = None


def fingerprint(payload: str) -> str:
    """
    Short stable digest of a serialized configuration.

    Example:
        >>> fingerprint(config.model_dump_json())
    """
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
