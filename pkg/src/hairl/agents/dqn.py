"""DQN: replay buffer, target network, Huber TD loss, linear epsilon schedule."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from hairl import nncore
from hairl.envs import env_spec, make_env
from hairl.agents.ppo import evaluate_policy
from hairl.agents.policy import greedy_from_logits
from hairl.errors import TrainingDivergedError

log = logging.getLogger(__name__)


@dataclass
class DQNConfig:
    gamma: float = 0.99
    lr: float = 1e-3
    buffer_size: int = 50_000
    batch_size: int = 64
    target_sync: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_steps: int = 20_000
    learning_starts: int = 1000
    train_freq: int = 1
    grad_steps: int = 1
    huber_delta: float = 1.0
    max_grad_norm: float = 10.0
    hidden: tuple = (64, 64)


class QFunction:
    """Online Q network plus a target copy synced every ``sync_interval`` steps."""

    def __init__(self, online: nncore.Network, sync_interval: int = 1000):
        self.online = online
        self.target = online.clone()
        self.sync_interval = sync_interval
        self.syncs = 0

    @classmethod
    def create(cls, obs_dim: int, n_actions: int, hidden=(64, 64), seed=0, sync_interval=1000):
        return cls(nncore.init_network([obs_dim, *hidden, n_actions], seed), sync_interval)

    @property
    def n_actions(self) -> int:
        return self.online.out_dim

    def q(self, obs) -> np.ndarray:
        return self.online.forward(np.atleast_2d(obs))

    def sync(self) -> None:
        self.target.copy_from(self.online)
        self.syncs += 1

    def maybe_sync(self, step: int) -> bool:
        if step > 0 and step % self.sync_interval == 0:
            self.sync()
            return True
        return False


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, n_actions: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminal = np.zeros(capacity)
        self.next_masks = np.ones((capacity, n_actions), dtype=bool)
        self.size = 0
        self._pos = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, action, reward, next_obs, terminal, next_mask=None) -> None:
        i = self._pos
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminal[i] = float(terminal)
        if next_mask is not None:
            self.next_masks[i] = next_mask
        self._pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def relabel(self, n: int, reward_fn) -> None:
        """Overwrite the rewards of the ``n`` most recent transitions with
        ``reward_fn(obs, actions, rewards)``."""
        n = min(n, self.size)
        if n == 0:
            return
        idx = (self._pos - n + np.arange(n)) % self.capacity
        self.rewards[idx] = reward_fn(self.obs[idx], self.actions[idx], self.rewards[idx])

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if self.size < batch_size:
            raise ValueError(f"replay buffer holds {self.size} < batch size {batch_size}")
        idx = rng.integers(self.size, size=batch_size)
        return {"obs": self.obs[idx], "actions": self.actions[idx], "rewards": self.rewards[idx],
                "next_obs": self.next_obs[idx], "terminal": self.terminal[idx],
                "next_masks": self.next_masks[idx]}


def td_targets(qfn: QFunction, batch: dict, gamma: float) -> np.ndarray:
    """``r + gamma * max_a' Q_target(s', a')`` over legal ``a'``; just ``r`` at terminals."""
    q_next = qfn.target.forward(batch["next_obs"])
    masks = batch.get("next_masks")
    if masks is not None:
        # terminal rows may have an all-false mask; their max is discarded below
        q_next = np.where(masks, q_next, -np.inf)
        best = np.max(q_next, axis=1)
        best = np.where(np.isfinite(best), best, 0.0)
    else:
        best = np.max(q_next, axis=1)
    return batch["rewards"] + gamma * (1.0 - batch["terminal"]) * best


def huber(x: np.ndarray, delta: float):
    a = np.abs(x)
    loss = np.where(a <= delta, 0.5 * x * x, delta * (a - 0.5 * delta))
    grad = np.clip(x, -delta, delta)
    return loss, grad


def dqn_td_loss(qfn: QFunction, batch: dict, gamma: float, delta: float = 1.0):
    """Mean Huber TD loss and its gradient w.r.t. the online parameters."""
    target = td_targets(qfn, batch, gamma)
    q = qfn.online.forward(batch["obs"])
    n = len(q)
    rows = np.arange(n)
    err = q[rows, batch["actions"]] - target
    loss, g = huber(err, delta)
    dout = np.zeros_like(q)
    dout[rows, batch["actions"]] = g / n
    return float(loss.mean()), qfn.online.backward(dout)


def dqn_update(qfn: QFunction, batch: dict, gamma: float, opt: nncore.AdamState,
               delta: float = 1.0, max_grad_norm: float | None = 10.0) -> float:
    loss, grads = dqn_td_loss(qfn, batch, gamma, delta)
    if not np.isfinite(loss):
        raise TrainingDivergedError("non-finite DQN TD loss", {"td_loss": loss})
    nncore.adam_step(qfn.online, nncore.clip_grads(grads, max_grad_norm), opt)
    return loss


def epsilon_greedy(qfn: QFunction, obs, eps: float, rng: np.random.Generator, mask=None) -> int:
    """Uniform over legal actions with probability ``eps``, else greedy (lowest index on ties)."""
    if rng.random() < eps:
        legal = np.arange(qfn.n_actions) if mask is None else np.flatnonzero(mask)
        return int(legal[rng.integers(len(legal))])
    return int(greedy_from_logits(qfn.q(obs), None if mask is None else np.atleast_2d(mask))[0])


def linear_epsilon(step: int, cfg: DQNConfig) -> float:
    if step >= cfg.eps_steps:
        return cfg.eps_end
    return cfg.eps_start + (step / max(1, cfg.eps_steps)) * (cfg.eps_end - cfg.eps_start)


class DQNAgent:
    """Greedy (or epsilon-greedy) actor over a Q network."""

    def __init__(self, qfn: QFunction, eval_eps: float = 0.05):
        self.qfn = qfn
        self.eval_eps = eval_eps

    def act(self, obs, mask=None, rng=None, deterministic=True):
        if deterministic or rng is None:
            return int(greedy_from_logits(self.qfn.q(obs), None if mask is None else np.atleast_2d(mask))[0])
        return epsilon_greedy(self.qfn, obs, self.eval_eps, rng, mask)

    def greedy_actions(self, obs, masks=None):
        return greedy_from_logits(self.qfn.q(obs), masks)

    def save(self, directory, meta: dict | None = None) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        nncore.save_network(self.qfn.online, d / "q.net",
                            {"sync_interval": self.qfn.sync_interval, **(meta or {})})

    @classmethod
    def load(cls, directory) -> "DQNAgent":
        net, meta = nncore.load_network(Path(directory) / "q.net")
        return cls(QFunction(net, int(meta.get("sync_interval", 1000))))


def train_dqn(env_id: str, cfg: DQNConfig, seed: int, total_steps: int,
              reward_fn: Optional[Callable] = None, eval_every: int = 0, eval_episodes: int = 10,
              opponent=None, keep_best: bool = False):
    """Train DQN on ``env_id``. Returns ``(DQNAgent, curve_rows)``.

    ``reward_fn(obs, actions, env_rewards) -> rewards`` replaces the learning
    reward. It is called on flat arrays of the transitions added since the
    last gradient phase, so every stored transition is relabelled before it
    can be sampled.

    With ``keep_best`` the returned agent holds the online weights of the
    best periodic evaluation rather than the last ones.
    """
    obs_dim, space = env_spec(env_id)
    ss = np.random.SeedSequence(seed)
    s_net, s_env, s_act, s_buf, s_eval = ss.spawn(5)
    qfn = QFunction.create(obs_dim, space.n, cfg.hidden, np.random.default_rng(s_net), cfg.target_sync)
    opt = nncore.adam_init(qfn.online, cfg.lr)
    buf = ReplayBuffer(cfg.buffer_size, obs_dim, space.n)
    env = make_env(env_id, opponent)
    env_rng = np.random.default_rng(s_env)
    act_rng = np.random.default_rng(s_act)
    buf_rng = np.random.default_rng(s_buf)
    eval_seed = int(np.random.default_rng(s_eval).integers(2 ** 31 - 1))
    agent = DQNAgent(qfn)
    rows = []
    state = env.reset(int(env_rng.integers(2 ** 31 - 1)))
    ep_return, recent, losses = 0.0, [], []
    best = (-np.inf, None)
    pending = 0
    for step in range(1, total_steps + 1):
        eps = linear_epsilon(step, cfg)
        a = epsilon_greedy(qfn, state.obs, eps, act_rng, state.mask)
        res = env.step(a)
        terminal = res.done and not res.truncated
        buf.add(state.obs, a, res.reward, res.obs, terminal, res.state.mask)
        pending += 1
        ep_return += res.reward
        if res.done:
            recent = (recent + [ep_return])[-100:]
            ep_return = 0.0
            state = env.reset(int(env_rng.integers(2 ** 31 - 1)))
        else:
            state = res.state
        if step >= cfg.learning_starts and step % cfg.train_freq == 0:
            if reward_fn is not None:
                buf.relabel(pending, reward_fn)
            pending = 0
            for _ in range(cfg.grad_steps):
                losses.append(dqn_update(qfn, buf.sample(cfg.batch_size, buf_rng), cfg.gamma, opt,
                                         cfg.huber_delta, cfg.max_grad_norm))
        qfn.maybe_sync(step)
        if eval_every and step % eval_every == 0:
            if recent:
                rows.append((step, "train_return", float(np.mean(recent))))
            if losses:
                rows.append((step, "td_loss", float(np.mean(losses))))
                losses = []
            rets = evaluate_policy(env_id, lambda o, m: agent.act(o, m), eval_episodes, eval_seed)
            rows.append((step, "eval_return", float(rets.mean())))
            log.debug("dqn %s step %d eval %.2f", env_id, step, rets.mean())
            if keep_best and rets.mean() > best[0]:
                best = (float(rets.mean()), qfn.online.clone())
    if keep_best and best[1] is not None:
        qfn.online.copy_from(best[1])
        qfn.sync()
    return agent, rows
