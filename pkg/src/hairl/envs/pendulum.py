"""Continuous-torque pendulum swing-up (g=10, m=1, l=1, dt=0.05)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hairl.envs.base import ActionSpace, EnvState, StepResult
from hairl.errors import StateError

G = 10.0
M = 1.0
L = 1.0
DT = 0.05
MAX_SPEED = 8.0
MAX_TORQUE = 2.0
MAX_STEPS = 200

OBS_DIM = 3
ACTION_SPACE = ActionSpace("continuous", dim=1, low=(-MAX_TORQUE,), high=(MAX_TORQUE,))
# worst per-step cost: pi^2 + 0.1 * 8^2 + 0.001 * 2^2
MAX_STEP_COST = math.pi ** 2 + 0.1 * MAX_SPEED ** 2 + 0.001 * MAX_TORQUE ** 2


@dataclass(frozen=True)
class PendulumState:
    theta: float
    theta_dot: float
    t: int = 0
    done: bool = False


def angle_normalize(x: float) -> float:
    return ((x + math.pi) % (2.0 * math.pi)) - math.pi


def encode_observation(raw: PendulumState) -> np.ndarray:
    return np.array([math.cos(raw.theta), math.sin(raw.theta), raw.theta_dot / MAX_SPEED])


def _wrap(raw: PendulumState) -> EnvState:
    return EnvState(encode_observation(raw), raw.done, None, raw)


def pendulum_state(theta: float, theta_dot: float, t: int = 0) -> EnvState:
    return _wrap(PendulumState(float(theta), float(theta_dot), t))


def pendulum_reset(seed) -> EnvState:
    rng = np.random.default_rng(seed)
    return pendulum_state(rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0))


def pendulum_step(state: EnvState, torque) -> StepResult:
    raw: PendulumState = state.raw
    if raw.done:
        raise StateError("step called on a finished Pendulum episode")
    u = float(np.clip(np.asarray(torque, dtype=np.float64).reshape(-1)[0], -MAX_TORQUE, MAX_TORQUE))
    th, thdot = raw.theta, raw.theta_dot
    reward = -(angle_normalize(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2)
    thdot = thdot + (3.0 * G / (2.0 * L) * math.sin(th) + 3.0 / (M * L ** 2) * u) * DT
    thdot = min(max(thdot, -MAX_SPEED), MAX_SPEED)
    th = angle_normalize(th + thdot * DT)
    t = raw.t + 1
    truncated = t >= MAX_STEPS
    nxt = _wrap(PendulumState(th, thdot, t, truncated))
    return StepResult(nxt.obs, reward, truncated, nxt, truncated=truncated)


class Pendulum:
    env_id = "pendulum"
    obs_dim = OBS_DIM
    action_space = ACTION_SPACE

    def __init__(self):
        self.state: EnvState | None = None

    def reset(self, seed) -> EnvState:
        self.state = pendulum_reset(seed)
        return self.state

    def step(self, action) -> StepResult:
        if self.state is None:
            raise StateError("reset must be called before step")
        res = pendulum_step(self.state, action)
        self.state = res.state
        return res
