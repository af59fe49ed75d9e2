"""Two-player Leduc Hold'em.

Six cards (J, Q, K in two suits), 1-chip ante, two betting rounds with bet
sizes 2 and 4, at most two raises per round, one public card revealed
before the second round. Seat 0 acts first in both rounds. Payoffs are
signed chips won; a big blind is 2 chips.

Observation (36 floats, from the acting player's point of view)::

    [0:6]    private card one-hot (card index 0..5, rank = index // 2)
    [6:13]   public card one-hot, index 6 = not yet revealed
    [13:15]  betting round one-hot
    [15:22]  own contribution one-hot over chips {1, 3, 5, 7, 9, 11, 13}
    [22:29]  opponent contribution one-hot over the same chip values
    [29:36]  contribution both players had at the start of this round,
             same chip values (1 during the first round)
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from hairl.envs.base import ActionSpace, EnvState, StepResult
from hairl.errors import IllegalActionError, StateError

FOLD, CALL, RAISE = 0, 1, 2
ACTION_NAMES = ("fold", "call", "raise")
N_CARDS = 6
ANTE = 1
BET_SIZES = (2, 4)
MAX_RAISES = 2
BIG_BLIND = 2
CHIP_VALUES = (1, 3, 5, 7, 9, 11, 13)

OBS_DIM = 36
ACTION_SPACE = ActionSpace("discrete", n=3)


def rank(card: int) -> int:
    return card // 2


@dataclass(frozen=True)
class LeducState:
    cards: tuple  # (seat-0 card, seat-1 card, public card)
    round: int = 0
    contrib: tuple = (ANTE, ANTE)
    round_start: int = ANTE
    raises: int = 0
    n_actions: int = 0
    player: int = 0
    history: tuple = ()  # ((round, player, action), ...)
    done: bool = False
    payoffs: Optional[tuple] = None


def legal_mask(raw: LeducState) -> np.ndarray:
    mask = np.zeros(3, dtype=bool)
    if raw.done:
        return mask
    p = raw.player
    facing_bet = raw.contrib[1 - p] > raw.contrib[p]
    mask[FOLD] = facing_bet
    mask[CALL] = True
    mask[RAISE] = raw.raises < MAX_RAISES
    return mask


def encode_observation(raw: LeducState, player: Optional[int] = None) -> np.ndarray:
    p = raw.player if player is None else player
    obs = np.zeros(OBS_DIM)
    obs[raw.cards[p]] = 1.0
    obs[6 + (raw.cards[2] if raw.round == 1 else 6)] = 1.0
    obs[13 + raw.round] = 1.0
    obs[15 + CHIP_VALUES.index(raw.contrib[p])] = 1.0
    obs[22 + CHIP_VALUES.index(raw.contrib[1 - p])] = 1.0
    obs[29 + CHIP_VALUES.index(raw.round_start)] = 1.0
    return obs


def showdown_payoffs(cards: tuple, contrib: tuple) -> tuple:
    """Chips won by (seat 0, seat 1) at showdown."""
    public = rank(cards[2])
    r0, r1 = rank(cards[0]), rank(cards[1])
    s0 = (r0 == public, r0)
    s1 = (r1 == public, r1)
    if s0 > s1:
        return (contrib[1], -contrib[1])
    if s1 > s0:
        return (-contrib[0], contrib[0])
    return (0, 0)


def _wrap(raw: LeducState) -> EnvState:
    return EnvState(encode_observation(raw), raw.done, legal_mask(raw), raw,
                    player=None if raw.done else raw.player)


def deal_from_seed(seed) -> tuple:
    rng = np.random.default_rng(seed)
    return tuple(int(c) for c in rng.permutation(N_CARDS)[:3])


def leduc_state(cards: tuple) -> EnvState:
    cards = tuple(int(c) for c in cards)
    if len(cards) != 3 or len(set(cards)) != 3 or not all(0 <= c < N_CARDS for c in cards):
        raise ValueError(f"invalid deal {cards}")
    return _wrap(LeducState(cards))


def leduc_reset(seed, deal: Optional[tuple] = None) -> EnvState:
    return leduc_state(deal if deal is not None else deal_from_seed(seed))


def leduc_step(state: EnvState, action) -> StepResult:
    """Apply ``action`` for the player to act.

    ``StepResult.reward`` is the acting player's payoff (0 until the hand
    ends); ``info["payoffs"]`` holds both seats' payoffs at the end.
    """
    raw: LeducState = state.raw
    if raw.done:
        raise StateError("step called on a finished Leduc hand")
    mask = legal_mask(raw)
    if action not in (FOLD, CALL, RAISE) or not mask[int(action)]:
        raise IllegalActionError(
            f"action {action!r} is illegal for player {raw.player}; legal={np.flatnonzero(mask).tolist()}")
    a = int(action)
    p = raw.player
    history = raw.history + ((raw.round, p, a),)
    contrib = list(raw.contrib)
    if a == FOLD:
        payoffs = [0, 0]
        payoffs[p] = -contrib[p]
        payoffs[1 - p] = contrib[p]
        nxt = replace(raw, history=history, done=True, payoffs=tuple(payoffs))
    elif a == RAISE:
        contrib[p] = contrib[1 - p] + BET_SIZES[raw.round]
        nxt = replace(raw, contrib=tuple(contrib), raises=raw.raises + 1,
                      n_actions=raw.n_actions + 1, player=1 - p, history=history)
    else:
        contrib[p] = contrib[1 - p]
        n_actions = raw.n_actions + 1
        if n_actions < 2:
            nxt = replace(raw, contrib=tuple(contrib), n_actions=n_actions, player=1 - p,
                          history=history)
        elif raw.round == 0:
            nxt = replace(raw, round=1, contrib=tuple(contrib), round_start=contrib[0], raises=0,
                          n_actions=0, player=0, history=history)
        else:
            nxt = replace(raw, contrib=tuple(contrib), n_actions=n_actions, history=history,
                          done=True, payoffs=showdown_payoffs(raw.cards, tuple(contrib)))
    new_state = _wrap(nxt)
    reward = float(nxt.payoffs[p]) if nxt.done else 0.0
    info = {"payoffs": nxt.payoffs} if nxt.done else {}
    return StepResult(new_state.obs, reward, nxt.done, new_state, info=info)


class Leduc:
    """Stateful two-player game."""

    env_id = "leduc"
    obs_dim = OBS_DIM
    action_space = ACTION_SPACE

    def __init__(self):
        self.state: EnvState | None = None

    def reset(self, seed, deal: Optional[tuple] = None) -> EnvState:
        self.state = leduc_reset(seed, deal)
        return self.state

    def step(self, action) -> StepResult:
        if self.state is None:
            raise StateError("reset must be called before step")
        res = leduc_step(self.state, action)
        self.state = res.state
        return res


# (obs, mask, rng) -> action
Opponent = Callable[[np.ndarray, np.ndarray, np.random.Generator], int]


def random_opponent(obs, mask, rng) -> int:
    legal = np.flatnonzero(mask)
    return int(legal[rng.integers(len(legal))])


class LeducVsOpponent:
    """Single-agent view of Leduc: the opponent's moves are played internally.

    Each reset draws the deal, the agent's seat and the opponent's random
    stream from ``seed``. The agent's reward is 0 until the hand ends, then
    its signed chip payoff.
    """

    env_id = "leduc"
    obs_dim = OBS_DIM
    action_space = ACTION_SPACE

    def __init__(self, opponent: Opponent = random_opponent, seat: Optional[int] = None):
        self.opponent = opponent
        self.fixed_seat = seat
        self.seat = 0
        self.state: EnvState | None = None
        self._rng = None

    def _advance(self) -> None:
        while not self.state.done and self.state.raw.player != self.seat:
            a = self.opponent(self.state.obs, self.state.mask, self._rng)
            self.state = leduc_step(self.state, a).state

    def _agent_view(self) -> EnvState:
        raw = self.state.raw
        return EnvState(encode_observation(raw, self.seat), raw.done,
                        legal_mask(raw) if not raw.done else np.zeros(3, dtype=bool), raw,
                        player=self.seat)

    def reset(self, seed) -> EnvState:
        ss = np.random.SeedSequence(seed)
        deal_seed, seat_seed, opp_seed = ss.spawn(3)
        self._rng = np.random.default_rng(opp_seed)
        self.seat = (self.fixed_seat if self.fixed_seat is not None
                     else int(np.random.default_rng(seat_seed).integers(2)))
        self.state = leduc_reset(None, deal_from_seed(deal_seed))
        self._advance()
        return self._agent_view()

    def step(self, action) -> StepResult:
        if self.state is None:
            raise StateError("reset must be called before step")
        if self.state.done:
            raise StateError("step called on a finished Leduc hand")
        self.state = leduc_step(self.state, action).state
        self._advance()
        view = self._agent_view()
        reward = float(self.state.raw.payoffs[self.seat]) if view.done else 0.0
        info = {"payoffs": self.state.raw.payoffs} if view.done else {}
        return StepResult(view.obs, reward, view.done, view, info=info)
