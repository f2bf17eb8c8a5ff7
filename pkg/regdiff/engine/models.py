from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    NonNegativeInt,
    PositiveFloat,
    model_validator,
)

from regdiff.risks.base import SmoothRisk, ZeroRisk
from regdiff.smoothing.proximity import ProximityFunction
from regdiff.smoothing.regularizers import RegularizerKind, ZeroRegularizer

# Define types for agent roles and algorithm variants
AgentRole = Literal["fully_informed", "data_informed", "structure_informed", "custom"]
Variant = Literal[
    "regularized_diffusion",
    "non_incremental",
    "centralized_reference",
    "non_cooperative",
]


class AgentSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    risk: SmoothRisk
    regularizer: RegularizerKind = ZeroRegularizer()
    role: AgentRole = "custom"
    proximity: ProximityFunction | None = None  # quadratic when unset

    @model_validator(mode="after")
    def _check_role(self):
        if self.role == "structure_informed" and not isinstance(self.risk, ZeroRisk):
            raise ValueError("A structure-informed agent must carry a zero risk")
        if self.role == "data_informed" and not isinstance(self.regularizer, ZeroRegularizer):
            raise ValueError("A data-informed agent must carry a zero regularizer")
        return self


class DiffusionConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    mu: PositiveFloat
    delta: PositiveFloat | None = None  # derived from kappa when unset
    kappa: float | None = None
    n_iterations: NonNegativeInt
    variant: Variant = "regularized_diffusion"
    seed: int = 0
    exact_gradients: bool = False

    @model_validator(mode="before")
    @classmethod
    def _resolve_delta(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        kappa, mu, delta = data.get("kappa"), data.get("mu"), data.get("delta")
        if kappa is None:
            if delta is None:
                raise ValueError("Either delta or kappa must be given")
            return data
        if not 0.25 < kappa < 0.5:
            raise ValueError(f"kappa must lie in (1/4, 1/2), got {kappa}")
        if not isinstance(mu, (int, float)) or mu <= 0:
            return data

        # A dumped config carries both; they must agree
        derived = mu ** (0.5 - kappa)
        if delta is not None and not np.isclose(delta, derived, rtol=1e-12, atol=0.0):
            raise ValueError(f"delta={delta} disagrees with mu^(1/2 - kappa)={derived}")
        return {**data, "delta": derived}

    @model_validator(mode="after")
    def _check_step(self):
        if self.mu > 2 * self.delta:
            raise ValueError(f"Step size mu={self.mu} exceeds 2*delta={2 * self.delta}")
        return self


@dataclass(frozen=True, slots=True)
class NetworkState:
    """
    Stacked agent iterates of shape (N, M) after ``iteration`` steps.
    """

    iterates: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, n_agents: int, dimension: int, start: np.ndarray | None = None) -> "NetworkState":
        if start is None:
            return cls(np.zeros((n_agents, dimension)))
        start = np.asarray(start, dtype=float)
        if start.shape == (dimension,):
            return cls(np.tile(start, (n_agents, 1)))
        if start.shape != (n_agents, dimension):
            raise ValueError(
                f"Initial iterate has shape {start.shape}, expected ({dimension},) or ({n_agents}, {dimension})"
            )
        return cls(start.copy())

    @property
    def n_agents(self) -> int:
        return self.iterates.shape[0]

    @property
    def dimension(self) -> int:
        return self.iterates.shape[1]
