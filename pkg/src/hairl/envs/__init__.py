"""Built-in environments selected by string id: ``mountaincar``, ``pendulum``, ``leduc``."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from hairl.envs import leduc, mountaincar, pendulum
from hairl.envs.base import ActionSpace, EnvState, StepResult
from hairl.errors import ConfigError

ENV_IDS = ("mountaincar", "pendulum", "leduc")


def make_env(env_id: str, opponent: Optional[Callable] = None):
    """Single-agent env; Leduc is wrapped against ``opponent`` (uniform random by default)."""
    if env_id == "mountaincar":
        return mountaincar.MountainCar()
    if env_id == "pendulum":
        return pendulum.Pendulum()
    if env_id == "leduc":
        return leduc.LeducVsOpponent(opponent or leduc.random_opponent)
    raise ConfigError(f"unknown env id {env_id!r}; expected one of {ENV_IDS}")


def env_spec(env_id: str) -> tuple[int, ActionSpace]:
    """(observation dim, action space) for an env id."""
    mod = {"mountaincar": mountaincar, "pendulum": pendulum, "leduc": leduc}.get(env_id)
    if mod is None:
        raise ConfigError(f"unknown env id {env_id!r}; expected one of {ENV_IDS}")
    return mod.OBS_DIM, mod.ACTION_SPACE


def encode_observation(env_id: str, raw, **kwargs) -> np.ndarray:
    mod = {"mountaincar": mountaincar, "pendulum": pendulum, "leduc": leduc}[env_id]
    return mod.encode_observation(raw, **kwargs)


class VecEnv:
    """Steps ``n_envs`` copies of a single-agent env in lockstep with auto-reset.

    Episode reset seeds are drawn from one generator seeded by ``seed`` and
    reported back with each finished episode, so any episode can be replayed.
    """

    def __init__(self, env_id: str, n_envs: int, seed, opponent=None):
        self.env_id = env_id
        self.envs = [make_env(env_id, opponent) for _ in range(n_envs)]
        self.obs_dim, self.action_space = env_spec(env_id)
        self._seed_rng = np.random.default_rng(seed)
        self.states: list[EnvState] = []
        self.ep_seeds: list[int] = []
        self.ep_returns = np.zeros(n_envs)
        self.ep_lengths = np.zeros(n_envs, dtype=np.int64)

    @property
    def n_envs(self) -> int:
        return len(self.envs)

    def _reset_one(self, i: int) -> EnvState:
        s = int(self._seed_rng.integers(2 ** 31 - 1))
        self.ep_seeds[i] = s
        self.ep_returns[i] = 0.0
        self.ep_lengths[i] = 0
        return self.envs[i].reset(s)

    def reset(self):
        self.ep_seeds = [0] * self.n_envs
        self.states = [self._reset_one(i) for i in range(self.n_envs)]
        return self.obs(), self.masks()

    def obs(self) -> np.ndarray:
        return np.stack([s.obs for s in self.states])

    def masks(self) -> Optional[np.ndarray]:
        if not self.action_space.discrete:
            return None
        return np.stack([s.mask for s in self.states])

    def step(self, actions):
        """Returns ``(obs, masks, rewards, dones, truncated, final_obs, finished)``.

        ``final_obs[i]`` is the true last observation of env ``i`` when it
        finished this step (``obs`` already holds the reset observation);
        ``finished`` lists ``(return, length, seed)`` of completed episodes.
        """
        n = self.n_envs
        rewards = np.zeros(n)
        dones = np.zeros(n, dtype=bool)
        truncs = np.zeros(n, dtype=bool)
        final_obs = np.zeros((n, self.obs_dim))
        finished = []
        for i, env in enumerate(self.envs):
            res = env.step(actions[i])
            rewards[i] = res.reward
            self.ep_returns[i] += res.reward
            self.ep_lengths[i] += 1
            final_obs[i] = res.obs
            if res.done:
                dones[i] = True
                truncs[i] = res.truncated
                finished.append((float(self.ep_returns[i]), int(self.ep_lengths[i]), self.ep_seeds[i]))
                self.states[i] = self._reset_one(i)
            else:
                self.states[i] = res.state
        return self.obs(), self.masks(), rewards, dones, truncs, final_obs, finished


def run_episode(env, act: Callable, seed) -> tuple[float, int]:
    """Roll out one episode with ``act(obs, mask) -> action``; returns (return, length)."""
    state = env.reset(seed)
    total, length = 0.0, 0
    while True:
        res = env.step(act(state.obs, state.mask))
        total += res.reward
        length += 1
        if res.done:
            return total, length
        state = res.state


__all__ = ["ActionSpace", "EnvState", "StepResult", "VecEnv", "ENV_IDS", "make_env", "env_spec",
           "encode_observation", "run_episode", "leduc", "mountaincar", "pendulum"]
