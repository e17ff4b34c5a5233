"""Request/result types shared by all solver backends."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..model import ModelInstance


class Status(str, enum.Enum):
    OPTIMAL = "optimal-within-gap"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    TIME_LIMIT = "time-limit"
    ERROR = "error"


class BackendError(RuntimeError):
    """Raised when a model cannot be handled by the selected backend."""


@dataclass
class SolveRequest:
    model: ModelInstance
    gap: float = 1e-4
    time_limit: float = 3600.0
    warm_start: np.ndarray | None = None
    threads: int = 1
    seed: int = 0
    # a bound already known to be valid for this model (e.g. from a relaxation
    # the model refines); it only ever raises the reported bound
    known_lower_bound: float = -math.inf
    # mixed-integer only: nodes whose bound reaches the cutoff are discarded.
    # A result without a point and status INFEASIBLE then certifies (through
    # ``bound``) that nothing cheaper than the cutoff exists.
    cutoff: float = math.inf

    def __post_init__(self):
        if not 0 < self.gap < 1:
            raise ValueError(f"gap target must lie in (0, 1), got {self.gap}")
        if not self.time_limit > 0:
            raise ValueError(f"time limit must be positive, got {self.time_limit}")


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray | None = None
    objective: float = math.inf
    bound: float = -math.inf
    residuals: dict[str, float] = field(default_factory=dict)
    wall_time: float = 0.0
    iterations: int = 0
    message: str = ""

    @property
    def has_point(self) -> bool:
        return self.x is not None and self.status in (Status.OPTIMAL, Status.FEASIBLE, Status.TIME_LIMIT)

    @property
    def gap(self) -> float:
        if not (math.isfinite(self.objective) and math.isfinite(self.bound)):
            return math.inf
        return (self.objective - self.bound) / max(abs(self.bound), 1e-12)
