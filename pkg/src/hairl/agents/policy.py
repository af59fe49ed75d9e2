"""Stochastic policies over a :class:`~hairl.nncore.Network`.

Discrete policies emit logits and use a masked softmax (illegal actions get
probability exactly 0). Continuous policies emit ``[mean, log_std]`` per
action dimension with ``log_std`` clamped to ``[LOG_STD_MIN, LOG_STD_MAX]``.

Gradient helpers return ``dL/d(output)`` so callers can mix several
objectives before a single ``net.backward``.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from hairl import nncore
from hairl.envs.base import ActionSpace
from hairl.errors import IllegalActionError, ShapeError

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def masked_log_softmax(logits: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    """Row-wise log-softmax; masked-out entries are ``-inf``."""
    z = np.array(logits, dtype=np.float64, copy=True)
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    zmax = np.max(z, axis=-1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def _entropy_from_logp(logp: np.ndarray) -> np.ndarray:
    p = np.exp(logp)
    return -np.sum(p * np.where(p > 0, logp, 0.0), axis=-1)


def greedy_from_logits(logits: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    """Argmax over legal actions; ties go to the lowest index."""
    z = np.asarray(logits, dtype=np.float64)
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    return np.argmax(z, axis=-1)


class Policy:
    def __init__(self, net: nncore.Network, action_space: ActionSpace):
        self.net = net
        self.action_space = action_space
        expect = action_space.n if action_space.discrete else 2 * action_space.dim
        if net.out_dim != expect:
            raise ShapeError(f"policy network outputs {net.out_dim}, action space needs {expect}")

    @classmethod
    def create(cls, obs_dim: int, action_space: ActionSpace, hidden=(64, 64), seed=0) -> "Policy":
        out = action_space.n if action_space.discrete else 2 * action_space.dim
        return cls(nncore.init_network([obs_dim, *hidden, out], seed), action_space)

    @property
    def discrete(self) -> bool:
        return self.action_space.discrete

    def clone(self) -> "Policy":
        return Policy(self.net.clone(), self.action_space)

    def _check_actions(self, actions, mask) -> np.ndarray:
        if self.discrete:
            a = np.asarray(actions, dtype=np.int64).reshape(-1)
            if np.any(a < 0) or np.any(a >= self.action_space.n):
                raise IllegalActionError(f"action out of range: {a}")
            if mask is not None and not np.all(mask[np.arange(len(a)), a]):
                raise IllegalActionError("log-probability requested for an illegal action")
            return a
        a = np.asarray(actions, dtype=np.float64).reshape(-1, self.action_space.dim)
        return a

    def _split(self, out: np.ndarray):
        d = self.action_space.dim
        mean = out[:, :d]
        raw = out[:, d:]
        return mean, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), raw

    def distribution(self, obs, mask=None):
        """Forward pass. Discrete: masked log-probs ``(N, n)``; continuous: ``(mean, log_std)``."""
        out = self.net.forward(np.atleast_2d(obs))
        if self.discrete:
            return masked_log_softmax(out, None if mask is None else np.atleast_2d(mask))
        mean, log_std, _ = self._split(out)
        return mean, log_std

    def log_prob(self, obs, actions, mask=None) -> np.ndarray:
        """Exact log pi(a|s): masked log-softmax or diagonal Gaussian density."""
        return self.evaluate(obs, actions, mask).logp

    def entropy(self, obs, mask=None) -> np.ndarray:
        return self.evaluate(obs, None, mask).entropy

    def sample(self, obs, rng: np.random.Generator, mask=None):
        """Sample actions for a batch; returns ``(actions, log_probs)``."""
        obs = np.atleast_2d(obs)
        if self.discrete:
            logp_all = self.distribution(obs, mask)
            p = np.exp(logp_all)
            u = rng.random(len(obs))
            cdf = np.cumsum(p, axis=-1)
            a = np.minimum((u[:, None] >= cdf).sum(axis=-1), self.action_space.n - 1)
            # guard against round-off landing on a masked tail entry
            bad = p[np.arange(len(a)), a] == 0
            if np.any(bad):
                a[bad] = np.argmax(p[bad], axis=-1)
            return a, logp_all[np.arange(len(a)), a]
        mean, log_std = self.distribution(obs)
        std = np.exp(log_std)
        eps = rng.standard_normal(mean.shape)
        a = mean + std * eps
        logp = np.sum(-0.5 * eps * eps - log_std - _HALF_LOG_2PI, axis=-1)
        return a, logp

    def greedy(self, obs, mask=None) -> np.ndarray:
        obs = np.atleast_2d(obs)
        out = self.net.forward(obs)
        if self.discrete:
            return greedy_from_logits(out, None if mask is None else np.atleast_2d(mask))
        return out[:, :self.action_space.dim].copy()

    def greedy_actions(self, obs, masks=None) -> np.ndarray:
        return self.greedy(obs, masks)

    def act(self, obs, mask=None, rng=None, deterministic=True):
        if deterministic or rng is None:
            a = self.greedy(obs, mask)[0]
        else:
            a = self.sample(obs, rng, mask)[0][0]
        return int(a) if self.discrete else np.clip(a, self.action_space.low, self.action_space.high)

    # ---- gradients -------------------------------------------------------

    def evaluate(self, obs, actions=None, mask=None) -> "PolicyEval":
        """Forward pass that keeps what is needed to differentiate a loss.

        The returned object exposes ``logp`` and ``entropy``; its ``dout``
        method turns per-sample partials into ``dL/d(output)`` for the
        network cache left by this call.
        """
        obs = np.atleast_2d(obs)
        mask = None if mask is None else np.atleast_2d(mask)
        a = self._check_actions(actions, mask) if actions is not None else None
        if a is not None and len(a) != len(obs):
            raise ShapeError(f"{len(obs)} observations but {len(a)} actions")
        return PolicyEval(self, self.net.forward(obs), a, mask)

    def backward(self, dout) -> list:
        return self.net.backward(dout)


class PolicyEval:
    def __init__(self, policy: Policy, out: np.ndarray, actions, mask):
        self.policy = policy
        self.out = out
        self.actions = actions
        n = len(out)
        if policy.discrete:
            self.logp_all = masked_log_softmax(out, mask)
            self.probs = np.exp(self.logp_all)
            self.entropy = _entropy_from_logp(self.logp_all)
            self.logp = None if actions is None else self.logp_all[np.arange(n), actions]
        else:
            self.mean, self.log_std, raw = policy._split(out)
            self._inside = ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)).astype(np.float64)
            self.std = np.exp(self.log_std)
            self.entropy = np.sum(self.log_std + 0.5 + _HALF_LOG_2PI, axis=-1)
            self.logp = None
            if actions is not None:
                self._z = (actions - self.mean) / self.std
                self.logp = np.sum(-0.5 * self._z ** 2 - self.log_std - _HALF_LOG_2PI, axis=-1)

    def dout(self, dlogp=None, dent=None, dmean=None) -> np.ndarray:
        """``dL/d(output)`` given per-sample ``dL/dlogp``, ``dL/dentropy`` and
        (continuous only) ``dL/dmean`` of shape ``(N, dim)``."""
        n = len(self.out)
        if self.policy.discrete:
            g = np.zeros_like(self.out)
            if dlogp is not None:
                onehot = np.zeros_like(self.out)
                onehot[np.arange(n), self.actions] = 1.0
                g += np.asarray(dlogp, dtype=np.float64)[:, None] * (onehot - self.probs)
            if dent is not None:
                safe = np.where(self.probs > 0, self.logp_all, 0.0)
                g += np.asarray(dent, dtype=np.float64)[:, None] * (
                    -self.probs * (safe + self.entropy[:, None]))
            return g
        gmean = np.zeros_like(self.mean)
        glogstd = np.zeros_like(self.mean)
        if dlogp is not None:
            c = np.asarray(dlogp, dtype=np.float64)[:, None]
            gmean += c * self._z / self.std
            glogstd += c * (self._z ** 2 - 1.0)
        if dent is not None:
            glogstd += np.asarray(dent, dtype=np.float64)[:, None]
        if dmean is not None:
            gmean += dmean
        return np.concatenate([gmean, glogstd * self._inside], axis=1)
