"""Discriminator and policy objectives for AIRL and Hybrid-AIRL.

The discriminator is ``D = exp(f) / (exp(f) + pi(a|s))``, evaluated as
``sigmoid(f - log pi)``. All losses below come with gradients so they can be
driven by the hand-written backprop in :mod:`hairl.nncore`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from hairl import nncore
from hairl.agents.policy import Policy
from hairl.envs.base import ActionSpace
from hairl.errors import ConfigError, ShapeError


def log_sigmoid(x):
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def disc_output(f_value, logpi):
    """``D = sigmoid(f - log pi)``; cannot overflow for finite inputs."""
    return np.exp(log_sigmoid(np.asarray(f_value, dtype=np.float64) - logpi))


def airl_reward(f_values, logpis) -> np.ndarray:
    """Per-step entropy-regularized reward ``f - log pi`` fed to the policy learner."""
    return np.asarray(f_values, dtype=np.float64) - np.asarray(logpis, dtype=np.float64)


def airl_policy_loss(f_values, logpis) -> float:
    """Batch mean of ``-f + log pi``."""
    return float(np.mean(-np.asarray(f_values, dtype=np.float64) + np.asarray(logpis, dtype=np.float64)))


def _check_weight(name: str, w: float) -> None:
    if not 0.0 <= w <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {w}")


def hybrid_policy_loss(airl_loss, sup_loss, alpha: float):
    """``(1 - alpha) * airl_loss + alpha * sup_loss``; scalars or gradient lists."""
    _check_weight("alpha", alpha)
    return mix(airl_loss, sup_loss, alpha)


def mix(a, b, w: float):
    """``(1 - w) * a + w * b`` for scalars, arrays or lists of arrays."""
    if isinstance(a, list):
        return [(1.0 - w) * x + w * y for x, y in zip(a, b)]
    return (1.0 - w) * a + w * b


# ---- batches -------------------------------------------------------------

@dataclass
class DemoBatch:
    """Expert state-action pairs, optionally with env rewards and legal masks."""

    obs: np.ndarray
    actions: np.ndarray
    r_env: Optional[np.ndarray] = None
    masks: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.obs)
        if len(self.actions) != n:
            raise ShapeError(f"{n} observations but {len(self.actions)} expert actions")
        if self.r_env is not None and len(self.r_env) != n:
            raise ShapeError(f"{n} observations but {len(self.r_env)} rewards")

    def __len__(self) -> int:
        return len(self.obs)

    def take(self, idx) -> "DemoBatch":
        return DemoBatch(self.obs[idx], self.actions[idx],
                         None if self.r_env is None else self.r_env[idx],
                         None if self.masks is None else self.masks[idx])


@dataclass
class PolicyBatch:
    """Policy samples with the log-probabilities recorded when they were drawn."""

    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    masks: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.obs)


# ---- supervised policy term ----------------------------------------------

def supervised_policy_loss_and_grad(policy: Policy, demos: DemoBatch):
    """Cross-entropy ``-log pi(a_E|s)`` (discrete) or MSE between the policy
    mean and the expert action (continuous). Returns ``(loss, grads)``."""
    if demos.obs.ndim != 2 or demos.obs.shape[1] != policy.net.in_dim:
        raise ShapeError(f"demo observations {demos.obs.shape} do not fit policy input {policy.net.in_dim}")
    n = len(demos)
    if policy.discrete:
        ev = policy.evaluate(demos.obs, demos.actions, demos.masks)
        loss = -float(np.mean(ev.logp))
        return loss, policy.backward(ev.dout(dlogp=np.full(n, -1.0 / n)))
    target = np.asarray(demos.actions, dtype=np.float64).reshape(n, -1)
    ev = policy.evaluate(demos.obs)
    if target.shape != ev.mean.shape:
        raise ShapeError(f"expert actions {target.shape} vs policy mean {ev.mean.shape}")
    err = ev.mean - target
    loss = float(np.mean(err ** 2))
    return loss, policy.backward(ev.dout(dmean=2.0 * err / err.size))


def supervised_policy_loss(policy: Policy, demos: DemoBatch) -> float:
    return supervised_policy_loss_and_grad(policy, demos)[0]


def airl_policy_loss_and_grad(policy: Policy, batch: PolicyBatch, f_values):
    """``mean(-f + log pi(a|s))`` with ``f`` held fixed; gradient w.r.t. policy parameters."""
    n = len(batch)
    ev = policy.evaluate(batch.obs, batch.actions, batch.masks)
    loss = airl_policy_loss(f_values, ev.logp)
    return loss, policy.backward(ev.dout(dlogp=np.full(n, 1.0 / n)))


# ---- discriminator -------------------------------------------------------

def encode_actions(actions, space: ActionSpace) -> np.ndarray:
    """One-hot for discrete spaces, actions clipped to bounds for continuous ones."""
    if space.discrete:
        a = np.asarray(actions, dtype=np.int64).reshape(-1)
        out = np.zeros((len(a), space.n))
        out[np.arange(len(a)), a] = 1.0
        return out
    a = np.asarray(actions, dtype=np.float64).reshape(-1, space.dim)
    return np.clip(a, space.low, space.high)


class Discriminator:
    """Reward network ``f(s, a)`` over ``concat(obs, action encoding)``."""

    def __init__(self, net: nncore.Network, obs_dim: int, action_space: ActionSpace):
        if net.in_dim != obs_dim + action_space.encoding_dim or net.out_dim != 1:
            raise ShapeError(f"reward net {net.layer_sizes} does not fit obs {obs_dim} + actions")
        self.net = net
        self.obs_dim = obs_dim
        self.action_space = action_space

    @classmethod
    def create(cls, obs_dim: int, action_space: ActionSpace, hidden=(64, 64), seed=0):
        net = nncore.init_network([obs_dim + action_space.encoding_dim, *hidden, 1], seed)
        return cls(net, obs_dim, action_space)

    def inputs(self, obs, actions) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        return np.concatenate([obs, encode_actions(actions, self.action_space)], axis=1)

    def f(self, obs, actions) -> np.ndarray:
        return self.net.forward(self.inputs(obs, actions))[:, 0]

    def reward(self, obs, action, env_reward=None) -> float:
        """RL-phase reward for one transition: ``f(s, a)`` alone."""
        return float(self.f(obs, [action])[0])

    def rewards(self, obs, actions, env_rewards=None) -> np.ndarray:
        return self.f(obs, actions)

    def save(self, path, meta: dict | None = None) -> None:
        nncore.save_network(self.net, path, {"obs_dim": self.obs_dim,
                                             "action_space": self.action_space.to_dict(),
                                             **(meta or {})})

    @classmethod
    def load(cls, path) -> "Discriminator":
        net, meta = nncore.load_network(path)
        return cls(net, int(meta["obs_dim"]), ActionSpace.from_dict(meta["action_space"]))


def adversarial_terms(f_exp, logpi_exp, f_pol, logpi_pol):
    """``-E_exp[log D] - E_pol[log(1 - D)]`` and its partials w.r.t. ``f_exp``, ``f_pol``."""
    x_e = np.asarray(f_exp, dtype=np.float64) - logpi_exp
    x_p = np.asarray(f_pol, dtype=np.float64) - logpi_pol
    if len(x_e) == 0 or len(x_p) == 0:
        raise ValueError("discriminator loss needs non-empty expert and policy batches")
    loss = -float(np.mean(log_sigmoid(x_e))) - float(np.mean(log_sigmoid(-x_p)))
    d_e = -np.exp(log_sigmoid(-x_e)) / len(x_e)
    d_p = np.exp(log_sigmoid(x_p)) / len(x_p)
    return loss, d_e, d_p


def supervised_terms(f_exp, r_env):
    """``mean((f - r_env)^2)`` and its partial w.r.t. ``f``."""
    if r_env is None:
        raise ConfigError("supervised discriminator loss needs env rewards for the expert pairs "
                          "(set beta=0 when they are unavailable)")
    err = np.asarray(f_exp, dtype=np.float64) - np.asarray(r_env, dtype=np.float64)
    return float(np.mean(err ** 2)), 2.0 * err / len(err)


def disc_adversarial_loss(expert: DemoBatch, policy_batch: PolicyBatch, disc: Discriminator,
                          policy: Policy) -> float:
    """Baseline AIRL cross-entropy; expert log-probs come from the current policy."""
    return disc_adversarial_loss_and_grad(expert, policy_batch, disc, policy)[0]


def _expert_logpi(policy: Policy, expert: DemoBatch) -> np.ndarray:
    return policy.log_prob(expert.obs, expert.actions, expert.masks)


def disc_adversarial_loss_and_grad(expert: DemoBatch, policy_batch: PolicyBatch, disc: Discriminator,
                                   policy: Policy, expert_logpi=None):
    lp_e = _expert_logpi(policy, expert) if expert_logpi is None else expert_logpi
    n_e = len(expert)
    x = np.concatenate([disc.inputs(expert.obs, expert.actions),
                        disc.inputs(policy_batch.obs, policy_batch.actions)])
    f = disc.net.forward(x)[:, 0]
    loss, d_e, d_p = adversarial_terms(f[:n_e], lp_e, f[n_e:], policy_batch.logp)
    grads = disc.net.backward(np.concatenate([d_e, d_p])[:, None])
    return loss, grads


def disc_supervised_loss(expert: DemoBatch, disc: Discriminator) -> float:
    return disc_supervised_loss_and_grad(expert, disc)[0]


def disc_supervised_loss_and_grad(expert: DemoBatch, disc: Discriminator):
    if expert.r_env is None:
        raise ConfigError("supervised discriminator loss needs env rewards for the expert pairs")
    f = disc.net.forward(disc.inputs(expert.obs, expert.actions))[:, 0]
    loss, d = supervised_terms(f, expert.r_env)
    return loss, disc.net.backward(d[:, None])


# ---- stochastic regularization -------------------------------------------

def noise_sigmas(batch_size: int, sigma_start: float, sigma_end: float,
                 shape: str = "linear") -> np.ndarray:
    """Per-index noise scales decaying from ``sigma_start`` (first) to ``sigma_end`` (last)."""
    errors = []
    if batch_size < 1:
        errors.append(f"batch size must be >= 1, got {batch_size}")
    if not 0.0 <= sigma_end <= sigma_start <= 1.0:
        errors.append(f"need 0 <= sigma_end <= sigma_start <= 1, got {sigma_start}, {sigma_end}")
    if shape not in ("linear", "geometric"):
        errors.append(f"unknown sigma schedule shape {shape!r}")
    if errors:
        raise ConfigError(errors)
    if batch_size == 1:
        return np.array([float(sigma_start)])
    if sigma_start == sigma_end:
        return np.full(batch_size, float(sigma_start))
    if shape == "geometric" and sigma_end > 0.0:
        return np.geomspace(sigma_start, sigma_end, batch_size)
    if shape == "geometric" and sigma_start > 0.0:
        raise ConfigError("geometric sigma schedule needs sigma_end > 0")
    return np.linspace(sigma_start, sigma_end, batch_size)


def perturb_actions(actions, sigmas, action_space: ActionSpace, rng: np.random.Generator,
                    masks=None) -> np.ndarray:
    """Noisy copies of policy actions for the discriminator.

    Continuous: Gaussian noise with std ``sigma_i * half_range``, clipped to
    the bounds. Discrete: with probability ``min(sigma_i, 1)`` the action is
    replaced by a uniformly drawn legal action.
    """
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if action_space.discrete:
        a = np.asarray(actions, dtype=np.int64).reshape(-1).copy()
        if len(sigmas) != len(a):
            raise ShapeError(f"{len(sigmas)} sigmas for {len(a)} actions")
        replace = rng.random(len(a)) < np.minimum(sigmas, 1.0)
        u = rng.random(len(a))
        legal = np.ones((len(a), action_space.n), dtype=bool) if masks is None else np.asarray(masks, bool)
        counts = legal.sum(axis=1)
        pick = np.minimum((u * counts).astype(np.int64), counts - 1)
        # index of the pick-th legal action in each row
        ranks = np.cumsum(legal, axis=1) - 1
        chosen = np.argmax(legal & (ranks == pick[:, None]), axis=1)
        a[replace] = chosen[replace]
        return a
    a = np.asarray(actions, dtype=np.float64).reshape(-1, action_space.dim)
    if len(sigmas) != len(a):
        raise ShapeError(f"{len(sigmas)} sigmas for {len(a)} actions")
    noise = rng.standard_normal(a.shape) * (sigmas[:, None] * action_space.half_range)
    return np.clip(a + noise, action_space.low, action_space.high)


@dataclass
class SRConfig:
    sigma_start: float = 0.0
    sigma_end: float = 0.0
    shape: str = "linear"

    @property
    def enabled(self) -> bool:
        return self.sigma_start > 0.0 or self.sigma_end > 0.0


def hybrid_disc_loss_and_grad(expert: DemoBatch, policy_batch: PolicyBatch, disc: Discriminator,
                              policy: Policy, beta: float, sr: SRConfig,
                              rng: Optional[np.random.Generator] = None, expert_logpi=None):
    """``(1 - beta) * adversarial + beta * supervised`` with SR-perturbed policy negatives.

    Only the policy actions entering the adversarial term are perturbed;
    the supervised term always regresses the expert pairs onto their
    recorded env rewards. Returns ``(loss, grads, parts)``.
    """
    _check_weight("beta", beta)
    if beta > 0.0 and expert.r_env is None:
        raise ConfigError("beta > 0 requires expert demonstrations that carry env rewards")
    pol_actions = policy_batch.actions
    if not disc.action_space.discrete:
        pol_actions = encode_actions(pol_actions, disc.action_space)
    if sr.enabled:
        sig = noise_sigmas(len(policy_batch), sr.sigma_start, sr.sigma_end, sr.shape)
        pol_actions = perturb_actions(pol_actions, sig, disc.action_space, rng, policy_batch.masks)
    lp_e = _expert_logpi(policy, expert) if expert_logpi is None else expert_logpi
    n_e = len(expert)
    x = np.concatenate([disc.inputs(expert.obs, expert.actions),
                        disc.inputs(policy_batch.obs, pol_actions)])
    f = disc.net.forward(x)[:, 0]
    adv, d_e, d_p = adversarial_terms(f[:n_e], lp_e, f[n_e:], policy_batch.logp)
    if expert.r_env is not None:
        sup, d_sup = supervised_terms(f[:n_e], expert.r_env)
    else:
        sup, d_sup = 0.0, np.zeros(n_e)
    loss = mix(adv, sup, beta)
    d_f = np.concatenate([mix(d_e, d_sup, beta), (1.0 - beta) * d_p])
    grads = disc.net.backward(d_f[:, None])
    return loss, grads, {"disc_adv_loss": adv, "disc_sup_loss": sup}


def hybrid_disc_loss(expert: DemoBatch, policy_batch: PolicyBatch, disc: Discriminator, policy: Policy,
                     beta: float, sr: SRConfig, rng=None) -> float:
    return hybrid_disc_loss_and_grad(expert, policy_batch, disc, policy, beta, sr, rng)[0]
