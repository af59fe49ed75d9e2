"""Alternating discriminator / policy training for AIRL and Hybrid-AIRL.

Each iteration collects a rollout with the current policy, runs the
discriminator updates on (expert, policy) pairs, then takes a PPO step on the
reward ``f(s, a) - log pi(a|s)``. The hybrid variant mixes in the supervised
policy and reward terms and perturbs the policy negatives.

``mode="airl"`` runs a separate code path that never touches the hybrid
terms. Every random draw comes from a dedicated stream, so a hybrid run with
all extensions switched off consumes exactly the same numbers as the AIRL
path and logs the same losses.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from hairl import nncore
from hairl.agents.policy import Policy
from hairl.agents.ppo import (PPOAgent, PPOConfig, PPOOptimizers, build_batch, collect_rollout,
                              evaluate_policy, ppo_update)
from hairl.envs import VecEnv, env_spec
from hairl.errors import ConfigError, TrainingDivergedError
from hairl.irl.losses import (DemoBatch, Discriminator, PolicyBatch, SRConfig, airl_policy_loss,
                              disc_adversarial_loss_and_grad, disc_output, hybrid_disc_loss_and_grad,
                              mix, supervised_policy_loss_and_grad)

log = logging.getLogger(__name__)

MODES = ("hairl", "airl")


@dataclass
class HybridConfig:
    """Hyperparameters of one IRL run. Defaults are the hybrid settings."""

    alpha: float = 0.1
    beta: float = 0.25
    sigma_start: float = 0.9
    sigma_end: float = 0.08
    sigma_shape: str = "linear"
    iterations: int = 100
    disc_batch: int = 256
    disc_epochs: int = 1
    disc_lr: float = 1e-4
    disc_hidden: tuple = (64, 64)
    disc_max_grad_norm: float = 10.0
    sup_batch: int = 64
    eval_every: int = 10
    eval_episodes: int = 10
    ppo: PPOConfig = field(default_factory=PPOConfig)

    @classmethod
    def airl(cls, **overrides) -> "HybridConfig":
        """Settings under which the hybrid run collapses to plain AIRL."""
        return cls(**{"alpha": 0.0, "beta": 0.0, "sigma_start": 0.0, "sigma_end": 0.0, **overrides})

    @property
    def sr(self) -> SRConfig:
        return SRConfig(self.sigma_start, self.sigma_end, self.sigma_shape)

    def validate(self) -> list[str]:
        errors = []
        for name in ("alpha", "beta", "sigma_start", "sigma_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                errors.append(f"{name} must lie in [0, 1], got {v}")
        if self.sigma_end > self.sigma_start:
            errors.append(f"sigma_end ({self.sigma_end}) must not exceed sigma_start ({self.sigma_start})")
        if self.sigma_shape not in ("linear", "geometric"):
            errors.append(f"sigma_shape must be 'linear' or 'geometric', got {self.sigma_shape!r}")
        if self.sigma_shape == "geometric" and self.sigma_start > 0 and self.sigma_end == 0:
            errors.append("geometric sigma schedule needs sigma_end > 0")
        for name in ("iterations", "disc_batch", "disc_epochs", "sup_batch"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.disc_lr <= 0:
            errors.append(f"disc_lr must be positive, got {self.disc_lr}")
        if not 0.0 < self.ppo.gamma <= 1.0:
            errors.append(f"gamma must lie in (0, 1], got {self.ppo.gamma}")
        return errors

    def check(self) -> None:
        errors = self.validate()
        if errors:
            raise ConfigError(errors)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["disc_hidden"] = list(self.disc_hidden)
        d["ppo"]["hidden"] = list(self.ppo.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HybridConfig":
        d = dict(d)
        ppo = d.pop("ppo", {}) or {}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError([f"unknown irl option {k!r}" for k in sorted(unknown)])
        if "disc_hidden" in d:
            d["disc_hidden"] = tuple(d["disc_hidden"])
        ppo_known = {f.name for f in fields(PPOConfig)}
        bad = set(ppo) - ppo_known
        if bad:
            raise ConfigError([f"unknown ppo option {k!r}" for k in sorted(bad)])
        ppo = dict(ppo)
        if "hidden" in ppo:
            ppo["hidden"] = tuple(ppo["hidden"])
        return cls(**d, ppo=PPOConfig(**ppo))


@dataclass
class IRLResult:
    policy: Policy
    value_net: nncore.Network
    disc: Discriminator
    rows: list
    mode: str = "hairl"

    def curve(self, metric: str):
        pts = [(i, v) for i, m, v in self.rows if m == metric]
        return np.array([p[0] for p in pts]), np.array([p[1] for p in pts])

    def last(self, metric: str) -> float:
        return float(self.curve(metric)[1][-1])

    def save(self, directory) -> None:
        d = Path(directory)
        PPOAgent(self.policy, self.value_net).save(d, {"mode": self.mode})
        self.disc.save(d / "disc.net", {"mode": self.mode})


def _as_batch(demos) -> DemoBatch:
    if isinstance(demos, DemoBatch):
        return demos
    if hasattr(demos, "to_batch"):
        return demos.to_batch()
    raise TypeError(f"expected DemoBatch or DemoSet, got {type(demos).__name__}")


def alignment_pct(policy: Policy, demos: DemoBatch) -> float:
    greedy = policy.greedy(demos.obs, demos.masks)
    return 100.0 * float(np.mean(greedy == np.asarray(demos.actions).reshape(-1)))


class _Streams:
    """Independent generators for every consumer of randomness in a run."""

    def __init__(self, seed):
        names = ("policy", "value", "disc_init", "env", "act", "ppo_mb", "disc_mb", "sr", "sup", "eval")
        self.__dict__.update({n: np.random.default_rng(s)
                              for n, s in zip(names, np.random.SeedSequence(seed).spawn(len(names)))})


def irl_train(config: HybridConfig, env_id: str, demos, seed: int = 0, mode: str = "hairl",
              opponent=None, callback=None) -> IRLResult:
    """Run ``config.iterations`` alternating IRL iterations on ``env_id``.

    Logged rows are ``(iteration, metric, value)``. Metrics include
    ``disc_loss``, ``policy_loss`` (the optimized PPO objective),
    ``airl_policy_loss``, ``train_return`` under the env reward,
    ``eval_return`` every ``eval_every`` iterations and ``alignment`` for
    discrete action spaces. ``callback(iteration, policy, disc)`` runs after
    every iteration.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown IRL mode {mode!r}; expected one of {MODES}")
    config.check()
    demos = _as_batch(demos)
    obs_dim, space = env_spec(env_id)
    errors = []
    if len(demos) == 0:
        errors.append("demonstration set is empty")
    elif demos.obs.ndim != 2 or demos.obs.shape[1] != obs_dim:
        errors.append(f"demo observations have shape {demos.obs.shape}, env {env_id} expects dim {obs_dim}")
    if mode == "hairl" and config.beta > 0 and demos.r_env is None:
        errors.append("beta > 0 requires demonstrations that carry env rewards")
    if errors:
        raise ConfigError(errors)

    cfg = config.ppo
    rng = _Streams(seed)
    policy = Policy.create(obs_dim, space, cfg.hidden, rng.policy)
    value_net = nncore.init_network([obs_dim, *cfg.hidden, 1], rng.value)
    disc = Discriminator.create(obs_dim, space, config.disc_hidden, rng.disc_init)
    opt = PPOOptimizers.create(policy, value_net, cfg)
    disc_opt = nncore.adam_init(disc.net, config.disc_lr)
    vec = VecEnv(env_id, cfg.n_envs, rng.env, opponent)
    eval_seed = int(rng.eval.integers(2 ** 31 - 1))
    obs, masks = vec.reset()
    hybrid = mode == "hairl"
    rows: list = []

    def combine(pg_loss, pg_grads):
        idx = rng.sup.integers(len(demos), size=config.sup_batch)
        sup_loss, sup_grads = supervised_policy_loss_and_grad(policy, demos.take(idx))
        loss = mix(pg_loss, sup_loss, config.alpha)
        return loss, mix(pg_grads, sup_grads, config.alpha), {"sup_policy_loss": sup_loss}

    for it in range(1, config.iterations + 1):
        roll, obs, masks = collect_rollout(vec, obs, masks, policy, value_net, cfg.n_steps, rng.act)
        pol = PolicyBatch(roll.flat("obs"), roll.flat("env_actions"), roll.flat("logp"),
                          None if roll.masks is None else roll.flat("masks"))

        disc_stats: dict = {"disc_loss": []}
        for _ in range(config.disc_epochs):
            perm = rng.disc_mb.permutation(len(pol))
            for start in range(0, len(pol), config.disc_batch):
                idx = perm[start:start + config.disc_batch]
                expert = demos.take(rng.disc_mb.integers(len(demos), size=len(idx)))
                pb = PolicyBatch(pol.obs[idx], pol.actions[idx], pol.logp[idx],
                                 None if pol.masks is None else pol.masks[idx])
                if hybrid:
                    loss, grads, parts = hybrid_disc_loss_and_grad(expert, pb, disc, policy, config.beta,
                                                                   config.sr, rng.sr)
                else:
                    loss, grads = disc_adversarial_loss_and_grad(expert, pb, disc, policy)
                    parts = {}
                if not np.isfinite(loss):
                    raise TrainingDivergedError(f"non-finite discriminator loss at iteration {it}",
                                                {"iteration": it, "disc_loss": loss, **parts})
                nncore.adam_step(disc.net, nncore.clip_grads(grads, config.disc_max_grad_norm), disc_opt)
                disc_stats["disc_loss"].append(loss)
                for k, v in parts.items():
                    disc_stats.setdefault(k, []).append(v)

        f = disc.f(pol.obs, pol.actions)
        rewards = (f - pol.logp).reshape(roll.env_rewards.shape)
        if not np.all(np.isfinite(rewards)):
            raise TrainingDivergedError(f"non-finite learned reward at iteration {it}",
                                        {"iteration": it, "max_abs_f": float(np.nanmax(np.abs(f)))})
        batch = build_batch(roll, rewards, cfg.gamma, cfg.lam)
        try:
            stats = ppo_update(policy, value_net, batch, cfg, opt, rng.ppo_mb, combine if hybrid else None)
        except TrainingDivergedError as exc:
            exc.diagnostics["iteration"] = it
            raise

        lp_e = policy.log_prob(demos.obs[:4096], demos.actions[:4096],
                               None if demos.masks is None else demos.masks[:4096])
        f_e = disc.f(demos.obs[:4096], demos.actions[:4096])
        out = {k: float(np.mean(v)) for k, v in disc_stats.items()}
        out.update({
            "policy_loss": stats["objective"],
            "ppo_loss": stats["policy_loss"],
            "airl_policy_loss": airl_policy_loss(f, pol.logp),
            "value_loss": stats["value_loss"],
            "entropy": stats["entropy"],
            "d_expert": float(np.mean(disc_output(f_e, lp_e))),
            "d_policy": float(np.mean(disc_output(f, pol.logp))),
        })
        if "sup_policy_loss" in stats:
            out["sup_policy_loss"] = stats["sup_policy_loss"]
        if roll.finished:
            out["train_return"] = float(np.mean([r for r, _, _ in roll.finished]))
        if space.discrete:
            out["alignment"] = alignment_pct(policy, demos)
        if config.eval_every and (it % config.eval_every == 0 or it == config.iterations):
            rets = evaluate_policy(env_id, lambda o, m: policy.act(o, m), config.eval_episodes, eval_seed)
            out["eval_return"] = float(rets.mean())
        rows.extend((it, k, v) for k, v in out.items())
        if callback is not None:
            callback(it, policy, disc)
        log.debug("%s %s it %d disc %.4f align %s", mode, env_id, it, out["disc_loss"], out.get("alignment"))

    return IRLResult(policy, value_net, disc, rows, mode)
