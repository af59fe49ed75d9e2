"""Measurement: action alignment, multi-seed curves, Leduc tournaments,
significance tests and MountainCar reward grids."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from hairl.envs import leduc, mountaincar
from hairl.errors import UnsupportedMetricError

log = logging.getLogger(__name__)

BONFERRONI_P = 0.0025


# ---- alignment -----------------------------------------------------------

def _demo_arrays(demos):
    if hasattr(demos, "to_batch"):
        if not demos.action_space.discrete:
            raise UnsupportedMetricError("action alignment is defined for discrete action spaces only")
        demos = demos.to_batch()
    return demos.obs, np.asarray(demos.actions), demos.masks


def action_alignment(agent, demos) -> float:
    """Percentage of demo states where the agent's greedy action equals the expert's.

    ``agent`` needs ``greedy_actions(obs, masks)``; argmax ties go to the
    lowest action index.
    """
    space = getattr(getattr(agent, "policy", agent), "action_space", None)
    if space is not None and not space.discrete:
        raise UnsupportedMetricError("action alignment is defined for discrete action spaces only")
    obs, actions, masks = _demo_arrays(demos)
    if len(obs) == 0:
        raise ValueError("action alignment over an empty demonstration set")
    if actions.dtype.kind == "f" and actions.ndim > 1:
        raise UnsupportedMetricError("action alignment is defined for discrete action spaces only")
    greedy = np.asarray(agent.greedy_actions(obs, masks)).reshape(-1)
    return 100.0 * float(np.mean(greedy == actions.reshape(-1)))


# ---- curves --------------------------------------------------------------

@dataclass
class CurveAggregate:
    steps: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_seeds: int
    single_run: bool = False


def aggregate_curves(runs: Sequence) -> CurveAggregate:
    """Mean and population std over seeds of ``(steps, values)`` pairs.

    Runs on different grids are linearly interpolated onto the sorted union
    of their steps inside the range all runs cover.
    """
    runs = [(np.asarray(s, dtype=np.float64), np.asarray(v, dtype=np.float64)) for s, v in runs]
    if not runs:
        raise ValueError("no runs to aggregate")
    for s, v in runs:
        if len(s) != len(v) or len(s) == 0:
            raise ValueError("each run needs equally long, non-empty step and value arrays")
    if all(len(s) == len(runs[0][0]) and np.array_equal(s, runs[0][0]) for s, _ in runs):
        grid = runs[0][0]
        values = np.stack([v for _, v in runs])
    else:
        lo = max(s.min() for s, _ in runs)
        hi = min(s.max() for s, _ in runs)
        if lo > hi:
            raise ValueError("runs do not share any step range")
        allsteps = np.unique(np.concatenate([s for s, _ in runs]))
        grid = allsteps[(allsteps >= lo) & (allsteps <= hi)]
        values = np.stack([np.interp(grid, s, v) for s, v in runs])
    single = len(runs) == 1
    if single:
        log.warning("aggregating a single run; std is reported as 0")
    return CurveAggregate(grid, values.mean(axis=0), values.std(axis=0), len(runs), single)


def curves_by_metric(rows_per_seed: dict) -> dict:
    """``{seed: [(step, metric, value)]}`` -> ``{metric: CurveAggregate}``."""
    metrics: dict = {}
    for seed in sorted(rows_per_seed):
        per: dict = {}
        for step, metric, value in rows_per_seed[seed]:
            per.setdefault(metric, ([], []))
            per[metric][0].append(step)
            per[metric][1].append(value)
        for metric, run in per.items():
            metrics.setdefault(metric, []).append(run)
    return {m: aggregate_curves(runs) for m, runs in sorted(metrics.items())}


def write_curves_csv(path, aggregates: dict, extra: Optional[dict] = None) -> None:
    """``curves.csv`` with columns step, metric, mean, std, n_seeds (plus fixed ``extra`` columns)."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*extra, "step", "metric", "mean", "std", "n_seeds"])
        for metric, agg in aggregates.items():
            for s, m, sd in zip(agg.steps, agg.mean, agg.std):
                w.writerow([*extra.values(), _num(s), metric, repr(float(m)), repr(float(sd)), agg.n_seeds])


def _num(x):
    x = float(x)
    return int(x) if x.is_integer() else repr(x)


# ---- tournaments ---------------------------------------------------------

class GreedyActor:
    """Memoizes ``act(obs, mask)`` of a deterministic agent per observation."""

    def __init__(self, agent):
        self.agent = agent
        self._cache: dict = {}

    def __call__(self, obs, mask) -> int:
        key = (obs.tobytes(), mask.tobytes())
        a = self._cache.get(key)
        if a is None:
            a = int(self.agent.act(obs, mask)) if hasattr(self.agent, "act") else int(self.agent(obs, mask))
            self._cache[key] = a
        return a


class RandomActor:
    """Uniform over legal actions from its own generator."""

    def __init__(self, seed=0):
        self.rng = np.random.default_rng(seed)

    def __call__(self, obs, mask) -> int:
        return leduc.random_opponent(obs, mask, self.rng)


def _actor(agent, memoize: bool) -> Callable:
    if isinstance(agent, RandomActor):
        return agent
    if memoize:
        return GreedyActor(agent)
    return (lambda o, m: int(agent.act(o, m))) if hasattr(agent, "act") else agent


def play_leduc_hand(actor0: Callable, actor1: Callable, deal: tuple) -> tuple:
    """Play one hand with ``actor0`` in seat 0; returns chip payoffs per seat."""
    state = leduc.leduc_state(deal)
    actors = (actor0, actor1)
    while not state.done:
        p = state.raw.player
        state = leduc.leduc_step(state, actors[p](leduc.encode_observation(state.raw, p), state.mask)).state
    return state.raw.payoffs


@dataclass
class TournamentResult:
    mbb_per_hand: float
    hands: int
    chips: float

    @property
    def bb_per_hand(self) -> float:
        return self.mbb_per_hand / 1000.0


def run_tournament(agent_a, agent_b, n_hands: int, seed, game: Callable = play_leduc_hand,
                   memoize: bool = True) -> TournamentResult:
    """Duplicate-style match: each deal is played twice with the seats swapped.

    Returns A's win rate in milli-big-blinds per hand. ``game(actor0,
    actor1, deal)`` may be swapped out to test the accounting.
    """
    if n_hands < 2 or n_hands % 2:
        raise ValueError(f"n_hands must be a positive even number for mirrored deals, got {n_hands}")
    a, b = _actor(agent_a, memoize), _actor(agent_b, memoize)
    ss = np.random.SeedSequence(seed)
    deal_rng = np.random.default_rng(ss)
    chips = 0
    for _ in range(n_hands // 2):
        deal = tuple(int(c) for c in deal_rng.permutation(leduc.N_CARDS)[:3])
        chips += game(a, b, deal)[0]
        chips += game(b, a, deal)[1]
    mbb = 1000.0 * chips / leduc.BIG_BLIND / n_hands
    return TournamentResult(float(mbb), n_hands, float(chips))


def write_tournament_csv(path, results: dict) -> None:
    """``tournament.csv``: seed, hands, mbb_per_hand."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "hands", "mbb_per_hand"])
        for seed in sorted(results):
            r = results[seed]
            w.writerow([seed, r.hands, repr(float(r.mbb_per_hand))])


@dataclass
class Significance:
    mean: float
    stderr: float
    p: float
    n: int
    ci95: tuple

    @property
    def significant(self) -> bool:
        return self.p < BONFERRONI_P


def significance(payoffs) -> Significance:
    """Mean, standard error and two-sided one-sample t-test against 0."""
    x = np.asarray(payoffs, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("significance needs at least 2 per-seed payoffs")
    mean = float(x.mean())
    se = float(x.std(ddof=1) / np.sqrt(len(x)))
    if se == 0.0:
        p = 1.0 if mean == 0.0 else 0.0
        return Significance(mean, 0.0, p, len(x), (mean, mean))
    res = stats.ttest_1samp(x, 0.0)
    half = float(stats.t.ppf(0.975, len(x) - 1)) * se
    return Significance(mean, se, float(res.pvalue), len(x), (mean - half, mean + half))


# ---- reward grids --------------------------------------------------------

@dataclass
class RewardGrid:
    positions: np.ndarray
    velocities: np.ndarray
    actions: np.ndarray  # (n_pos, n_vel) argmax action indices

    def fractions(self) -> np.ndarray:
        return np.bincount(self.actions.reshape(-1), minlength=3) / self.actions.size

    def write_csv(self, path) -> None:
        """``reward_grid.csv``: pos, vel, action_label."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pos", "vel", "action_label"])
            for i, p in enumerate(self.positions):
                for j, v in enumerate(self.velocities):
                    w.writerow([repr(float(p)), repr(float(v)), mountaincar.ACTION_LABELS[self.actions[i, j]]])


def reward_grid(disc, env_id: str = "mountaincar", resolution: int = 50) -> RewardGrid:
    """Argmax over actions of ``f(s, a)`` on a lattice over the MountainCar state bounds."""
    if env_id != "mountaincar":
        raise UnsupportedMetricError(f"reward grids need a 2-D state space; {env_id!r} is not supported")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    pos = np.linspace(mountaincar.MIN_POSITION, mountaincar.MAX_POSITION, resolution)
    vel = np.linspace(-mountaincar.MAX_SPEED, mountaincar.MAX_SPEED, resolution)
    pp, vv = np.meshgrid(pos, vel, indexing="ij")
    obs = mountaincar.encode_position_velocity(pp.reshape(-1), vv.reshape(-1))
    n = len(obs)
    f = np.stack([disc.f(obs, np.full(n, a)) for a in range(3)], axis=1)
    return RewardGrid(pos, vel, np.argmax(f, axis=1).reshape(resolution, resolution))
