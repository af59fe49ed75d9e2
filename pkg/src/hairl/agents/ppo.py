"""Proximal Policy Optimization with a separate value network."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from hairl import nncore
from hairl.agents.policy import Policy
from hairl.envs import VecEnv, env_spec, make_env, run_episode
from hairl.errors import TrainingDivergedError

log = logging.getLogger(__name__)


@dataclass
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    lr: float = 3e-4
    value_lr: float = 1e-3
    ent_coef: float = 0.01
    max_grad_norm: float = 0.5
    n_envs: int = 8
    n_steps: int = 256
    hidden: tuple = (64, 64)


@dataclass
class Rollout:
    """Time-major ``(T, N, ...)`` arrays collected from a :class:`VecEnv`.

    ``boot_values[t, i]`` is ``V(s_final)`` where env ``i`` hit its time
    limit at step ``t`` and 0 elsewhere.
    """

    obs: np.ndarray
    actions: np.ndarray
    env_actions: np.ndarray
    logp: np.ndarray
    env_rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    truncated: np.ndarray
    boot_values: np.ndarray
    masks: Optional[np.ndarray]
    last_values: np.ndarray
    finished: list = field(default_factory=list)

    def flat(self, name: str) -> np.ndarray:
        x = getattr(self, name)
        return x.reshape(x.shape[0] * x.shape[1], *x.shape[2:])


@dataclass
class RolloutBatch:
    """Flat, index-aligned training batch."""

    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    dones: np.ndarray
    masks: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.obs)

    def __post_init__(self):
        n = len(self.obs)
        for name in ("actions", "logp", "rewards", "values", "advantages", "returns", "dones"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"RolloutBatch field {name} has length {len(getattr(self, name))}, expected {n}")


def value_of(value_net: nncore.Network, obs) -> np.ndarray:
    return value_net.forward(np.atleast_2d(obs))[:, 0]


def to_env_action(policy: Policy, actions: np.ndarray) -> np.ndarray:
    if policy.discrete:
        return actions
    return np.clip(actions, policy.action_space.low, policy.action_space.high)


def collect_rollout(vec: VecEnv, obs, masks, policy: Policy, value_net: nncore.Network,
                    n_steps: int, rng: np.random.Generator):
    """Run ``n_steps`` lockstep steps; returns ``(rollout, obs, masks)`` to continue from."""
    n = vec.n_envs
    buf = {k: [] for k in ("obs", "actions", "env_actions", "logp", "env_rewards", "values",
                           "dones", "truncated", "boot_values", "masks")}
    finished = []
    for _ in range(n_steps):
        actions, logp = policy.sample(obs, rng, masks)
        values = value_of(value_net, obs)
        env_actions = to_env_action(policy, actions)
        nobs, nmasks, rewards, dones, truncs, final_obs, fin = vec.step(env_actions)
        boot = np.zeros(n)
        if np.any(truncs):
            boot[truncs] = value_of(value_net, final_obs[truncs])
        buf["obs"].append(obs)
        buf["actions"].append(actions)
        buf["env_actions"].append(env_actions)
        buf["logp"].append(logp)
        buf["env_rewards"].append(rewards)
        buf["values"].append(values)
        buf["dones"].append(dones)
        buf["truncated"].append(truncs)
        buf["boot_values"].append(boot)
        buf["masks"].append(masks)
        finished.extend(fin)
        obs, masks = nobs, nmasks
    arrays = {k: (np.stack(v) if v[0] is not None else None) for k, v in buf.items()}
    roll = Rollout(**arrays, last_values=value_of(value_net, obs), finished=finished)
    return roll, obs, masks


def compute_gae(rewards, values, dones, last_values, gamma: float, lam: float):
    """Generalized advantage estimation over time-major arrays.

    ``dones[t]`` marks that the episode ended after step ``t``; no value is
    bootstrapped across it. Returns ``(advantages, returns)`` with
    ``returns = advantages + values``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    nonterminal = 1.0 - np.asarray(dones, dtype=np.float64)
    adv = np.zeros_like(rewards)
    gae = np.zeros_like(rewards[0])
    next_value = np.asarray(last_values, dtype=np.float64)
    for t in range(len(rewards) - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * nonterminal[t] - values[t]
        gae = delta + gamma * lam * nonterminal[t] * gae
        adv[t] = gae
        next_value = values[t]
    return adv, adv + values


def build_batch(roll: Rollout, rewards: np.ndarray, gamma: float, lam: float) -> RolloutBatch:
    """GAE on ``rewards`` (T, N); time-limit steps bootstrap from ``boot_values``."""
    shaped = rewards + gamma * roll.boot_values
    adv, ret = compute_gae(shaped, roll.values, roll.dones, roll.last_values, gamma, lam)
    return RolloutBatch(
        obs=roll.flat("obs"), actions=roll.flat("actions"), logp=roll.flat("logp"),
        rewards=rewards.reshape(-1), values=roll.flat("values"), advantages=adv.reshape(-1),
        returns=ret.reshape(-1), dones=roll.flat("dones"),
        masks=None if roll.masks is None else roll.flat("masks"))


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def clipped_surrogate(logp_new, logp_old, adv, clip: float):
    """Per-sample clipped objective and ``d objective / d logp_new``."""
    ratio = np.exp(logp_new - logp_old)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    obj = np.minimum(surr1, surr2)
    dobj = np.where(surr1 <= surr2, surr1, 0.0)
    return obj, dobj, ratio


@dataclass
class PPOOptimizers:
    policy: nncore.AdamState
    value: nncore.AdamState

    @classmethod
    def create(cls, policy: Policy, value_net: nncore.Network, cfg: PPOConfig) -> "PPOOptimizers":
        return cls(nncore.adam_init(policy.net, cfg.lr), nncore.adam_init(value_net, cfg.value_lr))


# combine(ppo_loss, ppo_grads) -> (loss, grads, extras)
Combine = Callable[[float, list], tuple]


def _check_finite(values: dict, context: dict) -> None:
    bad = {k: v for k, v in values.items() if not np.isfinite(v)}
    if bad:
        raise TrainingDivergedError(f"non-finite PPO loss: {bad}", {**values, **context})


def ppo_update(policy: Policy, value_net: nncore.Network, batch: RolloutBatch, cfg: PPOConfig,
               opt: PPOOptimizers, rng: np.random.Generator,
               combine: Optional[Combine] = None) -> dict:
    """Clipped-surrogate update with entropy bonus; value net regressed to returns.

    ``combine`` may replace each minibatch's policy loss/gradient (used to
    mix in extra objectives). Returns mean diagnostics over all minibatches.
    """
    n = len(batch)
    adv_all = normalize_advantages(batch.advantages)
    stats = {"policy_loss": [], "objective": [], "value_loss": [], "entropy": [],
             "clip_frac": [], "approx_kl": []}
    extra_stats: dict = {}
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = perm[start:start + cfg.minibatch]
            m = len(idx)
            mask = None if batch.masks is None else batch.masks[idx]
            ev = policy.evaluate(batch.obs[idx], batch.actions[idx], mask)
            adv = adv_all[idx]
            obj, dobj, ratio = clipped_surrogate(ev.logp, batch.logp[idx], adv, cfg.clip)
            pg_loss = -float(obj.mean()) - cfg.ent_coef * float(ev.entropy.mean())
            dout = ev.dout(dlogp=-dobj / m, dent=np.full(m, -cfg.ent_coef / m))
            grads = policy.backward(dout)
            loss = pg_loss
            if combine is not None:
                loss, grads, extras = combine(pg_loss, grads)
                for k, v in extras.items():
                    extra_stats.setdefault(k, []).append(v)
            v = value_of(value_net, batch.obs[idx])
            err = v - batch.returns[idx]
            v_loss = 0.5 * float(np.mean(err ** 2))
            _check_finite({"policy_loss": pg_loss, "objective": loss, "value_loss": v_loss},
                          {"max_ratio": float(np.max(ratio)), "min_logp": float(np.min(ev.logp))})
            v_grads = value_net.backward((err / m)[:, None])
            nncore.adam_step(policy.net, nncore.clip_grads(grads, cfg.max_grad_norm), opt.policy)
            nncore.adam_step(value_net, nncore.clip_grads(v_grads, cfg.max_grad_norm), opt.value)
            stats["policy_loss"].append(pg_loss)
            stats["objective"].append(loss)
            stats["value_loss"].append(v_loss)
            stats["entropy"].append(float(ev.entropy.mean()))
            stats["clip_frac"].append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip)))
            stats["approx_kl"].append(float(np.mean(batch.logp[idx] - ev.logp)))
    out = {k: float(np.mean(v)) for k, v in stats.items()}
    out.update({k: float(np.mean(v)) for k, v in extra_stats.items()})
    return out


class PPOAgent:
    """Policy + value net pair; acts greedily unless asked to sample."""

    def __init__(self, policy: Policy, value_net: nncore.Network):
        self.policy = policy
        self.value_net = value_net

    def act(self, obs, mask=None, rng=None, deterministic=True):
        return self.policy.act(obs, mask, rng, deterministic)

    def greedy_actions(self, obs, masks=None):
        return self.policy.greedy(obs, masks)

    def save(self, directory, meta: dict | None = None) -> None:
        from pathlib import Path
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        nncore.save_network(self.policy.net, d / "policy.net",
                            {"action_space": self.policy.action_space.to_dict(), **(meta or {})})
        nncore.save_network(self.value_net, d / "value.net")

    @classmethod
    def load(cls, directory) -> "PPOAgent":
        from pathlib import Path
        from hairl.envs.base import ActionSpace
        d = Path(directory)
        net, meta = nncore.load_network(d / "policy.net")
        value_net, _ = nncore.load_network(d / "value.net")
        return cls(Policy(net, ActionSpace.from_dict(meta["action_space"])), value_net)


def evaluate_policy(env_id: str, act: Callable, n_episodes: int, seed) -> np.ndarray:
    """Episode returns (env reward) for ``act(obs, mask)`` over ``n_episodes`` seeded episodes."""
    env = make_env(env_id)
    seeds = np.random.default_rng(seed).integers(2 ** 31 - 1, size=n_episodes)
    return np.array([run_episode(env, act, int(s))[0] for s in seeds])


def train_ppo(env_id: str, cfg: PPOConfig, seed: int, total_steps: int,
              reward_fn: Optional[Callable] = None, eval_every: int = 0, eval_episodes: int = 10,
              policy: Optional[Policy] = None, value_net: Optional[nncore.Network] = None,
              keep_best: bool = False):
    """Train PPO on ``env_id``.

    ``reward_fn(obs, actions, env_rewards) -> rewards`` replaces the env reward
    for learning (flat arrays); evaluation always uses the env reward.
    Returns ``(PPOAgent, curve_rows)`` with rows ``(step, metric, value)``.
    With ``keep_best`` the returned policy holds the weights of the best
    periodic evaluation.
    """
    obs_dim, space = env_spec(env_id)
    ss = np.random.SeedSequence(seed)
    s_pi, s_v, s_env, s_act, s_mb, s_eval = ss.spawn(6)
    policy = policy or Policy.create(obs_dim, space, cfg.hidden, np.random.default_rng(s_pi))
    value_net = value_net or nncore.init_network([obs_dim, *cfg.hidden, 1], np.random.default_rng(s_v))
    opt = PPOOptimizers.create(policy, value_net, cfg)
    act_rng = np.random.default_rng(s_act)
    mb_rng = np.random.default_rng(s_mb)
    eval_seed = int(np.random.default_rng(s_eval).integers(2 ** 31 - 1))
    vec = VecEnv(env_id, cfg.n_envs, np.random.default_rng(s_env))
    obs, masks = vec.reset()
    rows = []
    steps = 0
    next_eval = eval_every
    recent: list = []
    best = (-np.inf, None, None)
    while steps < total_steps:
        roll, obs, masks = collect_rollout(vec, obs, masks, policy, value_net, cfg.n_steps, act_rng)
        steps += cfg.n_steps * cfg.n_envs
        if reward_fn is None:
            rewards = roll.env_rewards
        else:
            flat = reward_fn(roll.flat("obs"), roll.flat("env_actions"), roll.flat("env_rewards"))
            rewards = np.asarray(flat, dtype=np.float64).reshape(roll.env_rewards.shape)
        batch = build_batch(roll, rewards, cfg.gamma, cfg.lam)
        stats = ppo_update(policy, value_net, batch, cfg, opt, mb_rng)
        recent = (recent + [r for r, _, _ in roll.finished])[-20:]
        if recent:
            rows.append((steps, "train_return", float(np.mean(recent))))
        rows.append((steps, "policy_loss", stats["policy_loss"]))
        if eval_every and steps >= next_eval:
            next_eval += eval_every
            rets = evaluate_policy(env_id, lambda o, m: policy.act(o, m), eval_episodes, eval_seed)
            rows.append((steps, "eval_return", float(rets.mean())))
            log.debug("ppo %s step %d eval %.1f", env_id, steps, rets.mean())
            if keep_best and rets.mean() > best[0]:
                best = (float(rets.mean()), policy.net.clone(), value_net.clone())
    if keep_best and best[1] is not None:
        policy.net.copy_from(best[1])
        value_net.copy_from(best[2])
    return PPOAgent(policy, value_net), rows
