"""Experiment stages shared by the CLI and the acceptance suite:
IRL on demonstrations, then RL on the learned reward ``f(s, a)``."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional


from hairl.agents.dqn import DQNAgent, DQNConfig, train_dqn
from hairl.agents.ppo import PPOAgent, PPOConfig, evaluate_policy, train_ppo
from hairl.errors import ConfigError
from hairl.expert import EXPERT_PRESETS
from hairl.irl import HybridConfig, IRLResult, irl_train
from hairl.irl.losses import Discriminator

RL_ALGOS = ("dqn", "ppo")


@dataclass
class RLConfig:
    """RL phase on a learned reward; the learner reuses the expert's settings per env."""

    algo: str = "dqn"
    total_steps: int = 150_000
    eval_every: int = 10_000
    eval_episodes: int = 20
    final_episodes: int = 100
    dqn: DQNConfig = field(default_factory=DQNConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)

    def validate(self) -> list[str]:
        errors = []
        if self.algo not in RL_ALGOS:
            errors.append(f"rl.algo must be one of {RL_ALGOS}, got {self.algo!r}")
        if self.total_steps < 1:
            errors.append(f"rl.total_steps must be >= 1, got {self.total_steps}")
        if self.final_episodes < 1:
            errors.append(f"rl.final_episodes must be >= 1, got {self.final_episodes}")
        return errors

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dqn"]["hidden"] = list(self.dqn.hidden)
        d["ppo"]["hidden"] = list(self.ppo.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RLConfig":
        d = dict(d)
        sub = {"dqn": (DQNConfig, d.pop("dqn", {}) or {}), "ppo": (PPOConfig, d.pop("ppo", {}) or {})}
        unknown = set(d) - {f.name for f in fields(cls)}
        errors = [f"unknown rl option {k!r}" for k in sorted(unknown)]
        built = {}
        for name, (klass, vals) in sub.items():
            bad = set(vals) - {f.name for f in fields(klass)}
            errors += [f"unknown rl.{name} option {k!r}" for k in sorted(bad)]
            vals = dict(vals)
            if "hidden" in vals:
                vals["hidden"] = tuple(vals["hidden"])
            if not bad:
                built[name] = klass(**vals)
        if errors:
            raise ConfigError(errors)
        return cls(**d, **built)


def _default_dqn(env_id: str) -> DQNConfig:
    preset = EXPERT_PRESETS[env_id]
    return preset.config if preset.algo == "dqn" else DQNConfig()


def _default_ppo(env_id: str) -> PPOConfig:
    preset = EXPERT_PRESETS[env_id]
    return preset.config if preset.algo == "ppo" else PPOConfig()


RL_PRESETS = {
    "mountaincar": RLConfig("dqn", 150_000, 10_000, 20, 100, _default_dqn("mountaincar"), _default_ppo("mountaincar")),
    "pendulum": RLConfig("ppo", 300_000, 20_480, 10, 100, _default_dqn("pendulum"), _default_ppo("pendulum")),
    "leduc": RLConfig("dqn", 60_000, 0, 0, 2_000, _default_dqn("leduc"), _default_ppo("leduc")),
}

IRL_PRESETS = {
    "mountaincar": HybridConfig(iterations=50),
    "pendulum": HybridConfig(iterations=100, ppo=PPOConfig(gamma=0.9, lam=0.95, epochs=10, lr=1e-3,
                                                           ent_coef=0.0, n_envs=4, n_steps=512)),
    "leduc": HybridConfig(iterations=50),
}


def default_irl_config(env_id: str, **overrides) -> HybridConfig:
    if env_id not in IRL_PRESETS:
        raise ConfigError(f"no IRL preset for env {env_id!r}")
    return replace(IRL_PRESETS[env_id], **overrides)


def default_rl_config(env_id: str, **overrides) -> RLConfig:
    if env_id not in RL_PRESETS:
        raise ConfigError(f"no RL preset for env {env_id!r}")
    return replace(RL_PRESETS[env_id], **overrides)


def learned_reward(disc: Discriminator):
    """Batched RL-phase reward: ``f(s, a)`` alone, ignoring the env reward."""
    def reward_fn(obs, actions, env_rewards=None):
        return disc.f(obs, actions)
    return reward_fn


def train_rl(env_id: str, disc: Discriminator, cfg: RLConfig, seed, opponent=None):
    """Train the RL-phase learner on ``f(s, a)``. Returns ``(agent, rows)``.

    No checkpoint selection happens here: the returned agent holds the last
    weights, since picking by env return would leak the true reward.
    """
    errors = cfg.validate()
    if errors:
        raise ConfigError(errors)
    reward_fn = learned_reward(disc)
    if cfg.algo == "dqn":
        if not disc.action_space.discrete:
            raise ConfigError(f"DQN needs a discrete action space; {env_id} is continuous")
        return train_dqn(env_id, cfg.dqn, seed, cfg.total_steps, reward_fn, cfg.eval_every,
                         cfg.eval_episodes, opponent)
    return train_ppo(env_id, cfg.ppo, seed, cfg.total_steps, reward_fn, cfg.eval_every, cfg.eval_episodes)


def final_return(env_id: str, agent, n_episodes: int, seed) -> float:
    """Mean env return of the greedy agent over seeded evaluation episodes."""
    return float(evaluate_policy(env_id, lambda o, m: agent.act(o, m), n_episodes, [seed, 7]).mean())


@dataclass
class PipelineRun:
    seed: int
    mode: str
    irl: IRLResult
    agent: object
    rl_rows: list
    final_return: float

    @property
    def alignment(self) -> Optional[float]:
        s, v = self.irl.curve("alignment")
        return float(v[-1]) if len(v) else None


def run_irl_rl(env_id: str, demos, seed: int, mode: str = "hairl", irl_cfg: Optional[HybridConfig] = None,
               rl_cfg: Optional[RLConfig] = None) -> PipelineRun:
    """IRL on ``demos`` followed by RL on the learned reward, both from ``seed``."""
    irl_cfg = irl_cfg or default_irl_config(env_id)
    rl_cfg = rl_cfg or default_rl_config(env_id)
    irl = irl_train(irl_cfg, env_id, demos, seed, mode)
    agent, rows = train_rl(env_id, irl.disc, rl_cfg, seed)
    ret = final_return(env_id, agent, rl_cfg.final_episodes, seed)
    return PipelineRun(seed, mode, irl, agent, rows, ret)


def load_rl_agent(directory, algo: str):
    return DQNAgent.load(directory) if algo == "dqn" else PPOAgent.load(directory)
