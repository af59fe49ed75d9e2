from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np


@dataclass(frozen=True)
class ActionSpace:
    kind: str  # "discrete" | "continuous"
    n: int = 0
    dim: int = 0
    low: tuple = ()
    high: tuple = ()

    @property
    def discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def half_range(self) -> np.ndarray:
        return (np.asarray(self.high) - np.asarray(self.low)) / 2.0

    @property
    def encoding_dim(self) -> int:
        """Width of the action encoding fed to a reward network."""
        return self.n if self.discrete else self.dim

    def to_dict(self) -> dict:
        if self.discrete:
            return {"kind": "discrete", "n": self.n}
        return {"kind": "continuous", "dim": self.dim, "low": list(self.low), "high": list(self.high)}

    @classmethod
    def from_dict(cls, d: dict) -> "ActionSpace":
        if d["kind"] == "discrete":
            return cls("discrete", n=int(d["n"]))
        return cls("continuous", dim=int(d["dim"]),
                   low=tuple(float(x) for x in d["low"]), high=tuple(float(x) for x in d["high"]))


@dataclass
class EnvState:
    """Observation plus bookkeeping; ``raw`` holds the env-specific state."""

    obs: np.ndarray
    done: bool
    mask: Optional[np.ndarray]
    raw: Any
    player: Optional[int] = None


@dataclass
class StepResult:
    """Outcome of one step.

    ``done`` covers both real termination and the time limit; ``truncated``
    is set only for the latter so learners can keep bootstrapping.
    """

    obs: np.ndarray
    reward: float
    done: bool
    state: EnvState
    truncated: bool = False
    info: dict = field(default_factory=dict)
