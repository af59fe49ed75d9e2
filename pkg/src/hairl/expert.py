"""Expert agents trained on the true env reward, demonstration recording and
the ``demos.jsonl`` file format.

File layout: line 1 is a header object

    {"format": "hairl-demos", "version": 1, "env": ..., "obs_dim": ...,
     "action_space": {...}, "n_trajectories": ..., "meta": {...}}

followed by one object per trajectory with keys ``seed``, ``obs`` (list of
observation lists), ``actions``, ``rewards`` (null when recorded without
env rewards), ``dones`` and ``masks`` (list of boolean lists, or null for
envs without action restrictions). Keys are sorted and floats are written
with ``repr`` precision, so a save is byte-reproducible and a load is
lossless.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from hairl.agents.dqn import DQNAgent, DQNConfig, train_dqn
from hairl.agents.ppo import PPOAgent, PPOConfig, evaluate_policy, train_ppo
from hairl.envs import env_spec, make_env
from hairl.envs.base import ActionSpace
from hairl.envs.leduc import FOLD
from hairl.errors import ConfigError, DemoFormatError, DemoVersionError, ExpertQualityError
from hairl.eval import RandomActor, run_tournament
from hairl.irl.losses import DemoBatch

log = logging.getLogger(__name__)

DEMO_FORMAT = "hairl-demos"
DEMO_VERSION = 1
MASKED_ENVS = ("leduc",)


@dataclass(frozen=True)
class ExpertPreset:
    algo: str
    config: object
    total_steps: int
    gate: float
    default_demos: int


EXPERT_PRESETS = {
    "mountaincar": ExpertPreset(
        "dqn", DQNConfig(gamma=0.98, lr=4e-3, buffer_size=10_000, batch_size=128, target_sync=600,
                         eps_end=0.07, eps_steps=24_000, train_freq=16, grad_steps=8),
        150_000, -130.0, 100),
    "pendulum": ExpertPreset(
        "ppo", PPOConfig(gamma=0.9, lam=0.95, epochs=10, minibatch=64, lr=1e-3, ent_coef=0.0,
                         n_envs=4, n_steps=512),
        300_000, -300.0, 100),
    "leduc": ExpertPreset("dqn", DQNConfig(gamma=1.0, lr=5e-4), 60_000, 500.0, 20_000),
}
ALGOS = ("dqn", "ppo")


# ---- demo sets -----------------------------------------------------------

@dataclass
class Trajectory:
    seed: int
    obs: np.ndarray
    actions: np.ndarray
    rewards: Optional[np.ndarray]
    dones: np.ndarray
    masks: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def ret(self) -> float:
        return float("nan") if self.rewards is None else float(np.sum(self.rewards))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        for k in ("rewards", "masks"):
            mine, theirs = getattr(self, k), getattr(other, k)
            if (mine is None) != (theirs is None) or (mine is not None and not np.array_equal(mine, theirs)):
                return False
        return self.seed == other.seed and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("obs", "actions", "dones"))


@dataclass
class DemoSet:
    env_id: str
    obs_dim: int
    action_space: ActionSpace
    trajectories: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def n_steps(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def returns(self) -> np.ndarray:
        return np.array([t.ret for t in self.trajectories])

    @property
    def has_rewards(self) -> bool:
        return all(t.rewards is not None for t in self.trajectories)

    def to_batch(self) -> DemoBatch:
        """All (s, a, r_env) pairs flattened into one batch; ``r_env`` is None unless every trajectory has rewards."""
        space = self.action_space
        if not self.trajectories:
            shape = (0,) if space.discrete else (0, space.dim)
            return DemoBatch(np.zeros((0, self.obs_dim)), np.zeros(shape, dtype=np.int64 if space.discrete else float),
                             np.zeros(0), None)
        ts = self.trajectories
        masks = None if ts[0].masks is None else np.concatenate([t.masks for t in ts])
        r_env = np.concatenate([t.rewards for t in ts]) if self.has_rewards else None
        return DemoBatch(np.concatenate([t.obs for t in ts]), np.concatenate([t.actions for t in ts]), r_env, masks)

    def head(self, n: int) -> "DemoSet":
        return replace(self, trajectories=self.trajectories[:n])


def record_demos(agent, env_id: str, n_episodes: int, seed, deterministic: bool = True,
                 meta: Optional[dict] = None, strip_folds: bool = False, with_rewards: bool = True) -> DemoSet:
    """Roll out ``agent`` for ``n_episodes`` seeded episodes and keep every step.

    ``deterministic`` selects greedy actions; otherwise actions are sampled
    from the agent with a generator derived from ``seed``. ``strip_folds``
    (Leduc only) drops hands the expert ended by folding, mimicking datasets
    where folded cards stay hidden. ``with_rewards=False`` records no env
    rewards, as for demonstrations without ground truth.
    """
    if strip_folds and env_id != "leduc":
        raise ConfigError("strip_folds applies to leduc only")
    obs_dim, space = env_spec(env_id)
    env = make_env(env_id)
    ss = np.random.SeedSequence(seed)
    s_ep, s_act = ss.spawn(2)
    ep_seeds = np.random.default_rng(s_ep).integers(2 ** 31 - 1, size=n_episodes)
    act_rng = np.random.default_rng(s_act)
    trajs = []
    for s in ep_seeds:
        state = env.reset(int(s))
        obs, acts, rews, dones, masks = [], [], [], [], []
        while True:
            a = agent.act(state.obs, state.mask, act_rng, deterministic)
            res = env.step(a)
            obs.append(state.obs)
            acts.append(a)
            rews.append(res.reward)
            dones.append(res.done)
            masks.append(state.mask)
            if res.done:
                break
            state = res.state
        trajs.append(Trajectory(
            int(s), np.array(obs, dtype=np.float64),
            np.array(acts, dtype=np.int64) if space.discrete else np.array(acts, dtype=np.float64).reshape(-1, space.dim),
            np.array(rews, dtype=np.float64) if with_rewards else None, np.array(dones, dtype=bool),
            np.array(masks, dtype=bool) if env_id in MASKED_ENVS else None))
    if strip_folds:
        trajs = [t for t in trajs if t.actions[-1] != FOLD]
    rets = [t.ret for t in trajs] if with_rewards else []
    info = {"seed": seed if isinstance(seed, int) else str(seed), "deterministic": bool(deterministic),
            "strip_folds": bool(strip_folds),
            "mean_return": float(np.mean(rets)) if rets else None, **(meta or {})}
    return DemoSet(env_id, obs_dim, space, trajs, info)


def replay_return(demos: DemoSet, traj: Trajectory) -> float:
    """Episode return recomputed by replaying the stored actions from the stored seed."""
    env = make_env(demos.env_id)
    env.reset(traj.seed)
    total = 0.0
    for a in traj.actions:
        res = env.step(int(a) if demos.action_space.discrete else a)
        total += res.reward
    return total


# ---- file format ---------------------------------------------------------

def _traj_to_json(t: Trajectory) -> dict:
    return {"seed": t.seed, "obs": t.obs.tolist(), "actions": t.actions.tolist(),
            "rewards": None if t.rewards is None else t.rewards.tolist(), "dones": t.dones.tolist(),
            "masks": None if t.masks is None else t.masks.tolist()}


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_demos(demos: DemoSet, path) -> None:
    header = {"format": DEMO_FORMAT, "version": DEMO_VERSION, "env": demos.env_id, "obs_dim": demos.obs_dim,
              "action_space": demos.action_space.to_dict(), "n_trajectories": len(demos), "meta": demos.meta}
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(_dumps(header) + "\n")
        for t in demos.trajectories:
            fh.write(_dumps(_traj_to_json(t)) + "\n")
    tmp.replace(path)


def _parse_traj(d, lineno: int, obs_dim: int, space: ActionSpace) -> Trajectory:
    need = ("seed", "obs", "actions", "rewards", "dones", "masks")
    if not isinstance(d, dict):
        raise DemoFormatError("trajectory line is not a JSON object", lineno)
    missing = [k for k in need if k not in d]
    if missing:
        raise DemoFormatError(f"trajectory is missing fields {missing}", lineno)
    try:
        obs = np.array(d["obs"], dtype=np.float64).reshape(-1, obs_dim) if d["obs"] else np.zeros((0, obs_dim))
        if space.discrete:
            actions = np.array(d["actions"], dtype=np.int64)
        else:
            actions = np.array(d["actions"], dtype=np.float64).reshape(-1, space.dim)
        rewards = None if d["rewards"] is None else np.array(d["rewards"], dtype=np.float64)
        dones = np.array(d["dones"], dtype=bool)
        masks = None if d["masks"] is None else np.array(d["masks"], dtype=bool).reshape(-1, space.n)
    except (ValueError, TypeError) as exc:
        raise DemoFormatError(f"bad trajectory arrays: {exc}", lineno) from None
    n = len(actions)
    lens = {"obs": len(obs), "dones": len(dones)}
    if rewards is not None:
        lens["rewards"] = len(rewards)
    if masks is not None:
        lens["masks"] = len(masks)
    if any(v != n for v in lens.values()):
        raise DemoFormatError(f"trajectory arrays disagree in length: actions {n}, {lens}", lineno)
    if n == 0 or not dones[-1]:
        raise DemoFormatError("trajectory does not terminate", lineno)
    return Trajectory(int(d["seed"]), obs, actions, rewards, dones, masks)


def load_demos(path) -> DemoSet:
    """Parse ``demos.jsonl``; any problem raises :class:`DemoFormatError` with its line number."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DemoFormatError("empty file", 1)

    def parse(i):
        try:
            return json.loads(lines[i])
        except json.JSONDecodeError as exc:
            raise DemoFormatError(f"invalid JSON ({exc.msg})", i + 1) from None

    header = parse(0)
    if not isinstance(header, dict) or header.get("format") != DEMO_FORMAT:
        raise DemoFormatError(f"not a {DEMO_FORMAT} file", 1)
    if header.get("version") != DEMO_VERSION:
        raise DemoVersionError(f"unsupported demo format version {header.get('version')!r}; "
                               f"this build reads version {DEMO_VERSION}", 1)
    try:
        env_id, obs_dim = header["env"], int(header["obs_dim"])
        space = ActionSpace.from_dict(header["action_space"])
        n_traj = int(header["n_trajectories"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DemoFormatError(f"bad header: {exc}", 1) from None
    trajs = [_parse_traj(parse(i), i + 1, obs_dim, space) for i in range(1, len(lines))]
    if len(trajs) != n_traj:
        raise DemoFormatError(f"header announces {n_traj} trajectories but {len(trajs)} were found "
                              "(truncated file?)", len(lines) + 1)
    return DemoSet(env_id, obs_dim, space, trajs, header.get("meta") or {})


# ---- experts -------------------------------------------------------------

@dataclass
class ExpertResult:
    agent: object
    algo: str
    quality: float
    gate: float
    attempts: int
    rows: list

    @property
    def passed(self) -> bool:
        return self.quality >= self.gate


def expert_quality(agent, env_id: str, seed, eval_episodes: int = 100, eval_hands: int = 100_000) -> float:
    """Mean eval return (control tasks) or mbb/h against a random opponent (leduc)."""
    if env_id == "leduc":
        return run_tournament(agent, RandomActor([seed, 1]), eval_hands, [seed, 2]).mbb_per_hand
    return float(evaluate_policy(env_id, lambda o, m: agent.act(o, m), eval_episodes, [seed, 3]).mean())


def train_expert(env_id: str, algo: Optional[str] = None, config=None, seed: int = 0,
                 total_steps: Optional[int] = None, gate: Optional[float] = None,
                 max_attempts: int = 3, eval_episodes: int = 100, eval_hands: int = 100_000) -> ExpertResult:
    """Train on the true env reward until the quality gate passes.

    Each retry reseeds training. Raises :class:`ExpertQualityError` when no
    attempt reaches the gate, so no demos can be recorded from a weak expert.
    """
    preset = EXPERT_PRESETS.get(env_id)
    if preset is None:
        raise ConfigError(f"no expert preset for env {env_id!r}")
    algo = algo or preset.algo
    if algo not in ALGOS:
        raise ConfigError(f"unknown expert algo {algo!r}; expected one of {ALGOS}")
    if algo == "dqn" and not env_spec(env_id)[1].discrete:
        raise ConfigError(f"DQN needs a discrete action space; {env_id} is continuous")
    if config is None:
        config = preset.config if algo == preset.algo else (DQNConfig() if algo == "dqn" else PPOConfig())
    total_steps = total_steps or preset.total_steps
    gate = preset.gate if gate is None else gate
    quality = -np.inf
    for attempt in range(max_attempts):
        run_seed = seed if attempt == 0 else [seed, attempt]
        if algo == "dqn":
            eval_every = max(1_000, total_steps // 30) if env_id != "leduc" else 0
            agent, rows = train_dqn(env_id, config, run_seed, total_steps, eval_every=eval_every,
                                    eval_episodes=20, keep_best=env_id != "leduc")
        else:
            agent, rows = train_ppo(env_id, config, run_seed, total_steps,
                                    eval_every=max(2_048, total_steps // 15), eval_episodes=10, keep_best=True)
        quality = expert_quality(agent, env_id, seed, eval_episodes, eval_hands)
        log.info("expert %s/%s attempt %d quality %.2f (gate %.2f)", env_id, algo, attempt, quality, gate)
        if quality >= gate:
            return ExpertResult(agent, algo, quality, gate, attempt + 1, rows)
    raise ExpertQualityError(f"{env_id} {algo} expert reached {quality:.2f} after {max_attempts} attempts; "
                             f"gate is {gate:.2f}")


def load_expert(directory, algo: str):
    return DQNAgent.load(directory) if algo == "dqn" else PPOAgent.load(directory)
