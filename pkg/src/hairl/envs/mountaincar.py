"""Discrete MountainCar with the classic-control dynamics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hairl.envs.base import ActionSpace, EnvState, StepResult
from hairl.errors import IllegalActionError, StateError

MIN_POSITION = -1.2
MAX_POSITION = 0.6
MAX_SPEED = 0.07
GOAL_POSITION = 0.5
FORCE = 0.001
GRAVITY = 0.0025
MAX_STEPS = 200

OBS_DIM = 2
ACTION_SPACE = ActionSpace("discrete", n=3)
ACTION_LABELS = ("L", "N", "R")
_MASK = np.ones(3, dtype=bool)


@dataclass(frozen=True)
class MountainCarState:
    position: float
    velocity: float
    t: int = 0
    done: bool = False


def encode_observation(raw: MountainCarState) -> np.ndarray:
    """Min-max scale (position, velocity) to [-1, 1]."""
    return encode_position_velocity(raw.position, raw.velocity)


def encode_position_velocity(position, velocity) -> np.ndarray:
    p = 2.0 * (np.asarray(position, dtype=np.float64) - MIN_POSITION) / (MAX_POSITION - MIN_POSITION) - 1.0
    v = np.asarray(velocity, dtype=np.float64) / MAX_SPEED
    return np.stack([p, v], axis=-1)


def _wrap(raw: MountainCarState) -> EnvState:
    return EnvState(encode_observation(raw), raw.done, _MASK.copy(), raw)


def mc_state(position: float, velocity: float, t: int = 0) -> EnvState:
    return _wrap(MountainCarState(float(position), float(velocity), t))


def mc_reset(seed) -> EnvState:
    rng = np.random.default_rng(seed)
    return mc_state(rng.uniform(-0.6, -0.4), 0.0)


def mc_step(state: EnvState, action) -> StepResult:
    raw: MountainCarState = state.raw
    if raw.done:
        raise StateError("step called on a finished MountainCar episode")
    if action not in (0, 1, 2):
        raise IllegalActionError(f"MountainCar action must be 0, 1 or 2, got {action!r}")
    v = raw.velocity + (int(action) - 1) * FORCE - GRAVITY * math.cos(3.0 * raw.position)
    v = min(max(v, -MAX_SPEED), MAX_SPEED)
    p = min(max(raw.position + v, MIN_POSITION), MAX_POSITION)
    if p <= MIN_POSITION and v < 0:
        v = 0.0
    t = raw.t + 1
    terminated = p >= GOAL_POSITION
    truncated = (not terminated) and t >= MAX_STEPS
    nxt = _wrap(MountainCarState(p, v, t, terminated or truncated))
    return StepResult(nxt.obs, -1.0, nxt.done, nxt, truncated=truncated)


class MountainCar:
    """Stateful wrapper around :func:`mc_reset` / :func:`mc_step`."""

    env_id = "mountaincar"
    obs_dim = OBS_DIM
    action_space = ACTION_SPACE

    def __init__(self):
        self.state: EnvState | None = None

    def reset(self, seed) -> EnvState:
        self.state = mc_reset(seed)
        return self.state

    def step(self, action) -> StepResult:
        if self.state is None:
            raise StateError("reset must be called before step")
        res = mc_step(self.state, action)
        self.state = res.state
        return res
