import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hairl.envs import VecEnv, env_spec, leduc, make_env, mountaincar, pendulum, run_episode
from hairl.errors import ConfigError, IllegalActionError, StateError


# ---- MountainCar ---------------------------------------------------------

def test_mc_one_step_velocity():
    res = mountaincar.mc_step(mountaincar.mc_state(-0.5, 0.0), 1)
    assert res.state.raw.velocity == pytest.approx(-0.0025 * math.cos(-1.5), abs=1e-15)
    assert res.state.raw.velocity == pytest.approx(-1.768e-4, abs=1e-7)
    assert res.reward == -1.0


def test_mc_goal_terminates_with_step_count_return():
    # a car at the goal edge moving right finishes on the first step
    state = mountaincar.mc_state(0.49, 0.02)
    res = mountaincar.mc_step(state, 2)
    assert res.done and not res.truncated
    assert res.state.raw.position >= 0.5


def test_mc_bang_bang_return_equals_minus_steps():
    env = mountaincar.MountainCar()
    ret, length = run_episode(env, lambda o, m: 2 if o[1] >= 0 else 0, 3)
    assert length < 200
    assert ret == -length


def test_mc_neutral_never_escapes():
    env = mountaincar.MountainCar()
    env.reset(0)
    env.state = mountaincar.mc_state(-0.5, 0.0)
    ret, length = 0.0, 0
    while True:
        res = env.step(1)
        length += 1
        ret += res.reward
        assert res.state.raw.position < 0.5
        if res.done:
            break
    assert res.truncated and length == 200 and ret == -200


def test_mc_step_after_done():
    state = mountaincar.mc_step(mountaincar.mc_state(0.49, 0.02), 2).state
    with pytest.raises(StateError):
        mountaincar.mc_step(state, 1)


def test_mc_rejects_bad_action():
    with pytest.raises(IllegalActionError):
        mountaincar.mc_step(mountaincar.mc_state(-0.5, 0.0), 3)


def test_mc_encoding_endpoints():
    assert np.array_equal(mountaincar.encode_position_velocity(-1.2, -0.07), [-1.0, -1.0])
    assert np.allclose(mountaincar.encode_position_velocity(0.6, 0.07), [1.0, 1.0])


@given(st.lists(st.integers(0, 2), min_size=1, max_size=200), st.integers(0, 2 ** 31 - 1))
def test_mc_bounds(actions, seed):
    state = mountaincar.mc_reset(seed)
    assert -0.6 <= state.raw.position <= -0.4 and state.raw.velocity == 0.0
    for a in actions:
        res = mountaincar.mc_step(state, a)
        p, v = res.state.raw.position, res.state.raw.velocity
        assert -1.2 <= p <= 0.6 and -0.07 <= v <= 0.07
        assert np.all(np.abs(res.obs) <= 1.0)
        if res.done:
            break
        state = res.state


# ---- Pendulum ------------------------------------------------------------

def test_pendulum_fixed_point():
    res = pendulum.pendulum_step(pendulum.pendulum_state(0.0, 0.0), [0.0])
    assert res.reward == 0.0
    assert res.state.raw.theta == 0.0 and res.state.raw.theta_dot == 0.0


def test_pendulum_inverted_cost():
    res = pendulum.pendulum_step(pendulum.pendulum_state(math.pi, 0.0), [0.0])
    assert res.reward == pytest.approx(-math.pi ** 2, abs=1e-12)


def test_pendulum_encoding_upright():
    assert np.array_equal(pendulum.encode_observation(pendulum.PendulumState(0.0, 0.0)), [1.0, 0.0, 0.0])


def test_pendulum_horizon():
    ret, length = run_episode(pendulum.Pendulum(), lambda o, m: np.zeros(1), 0)
    assert length == 200


def test_pendulum_random_rollouts_in_range():
    env = pendulum.Pendulum()
    rng = np.random.default_rng(0)
    rets = [run_episode(env, lambda o, m: rng.uniform(-2, 2, size=1), s)[0] for s in range(200)]
    assert all(-2000.0 <= r <= 0.0 for r in rets)


@given(st.lists(st.floats(-5, 5), min_size=200, max_size=200), st.integers(0, 2 ** 31 - 1))
def test_pendulum_worst_case_bound(torques, seed):
    # per-step cost is at most pi^2 + 0.1 * 8^2 + 0.001 * 2^2
    state = pendulum.pendulum_reset(seed)
    total = 0.0
    for u in torques:
        res = pendulum.pendulum_step(state, [u])
        assert -pendulum.MAX_STEP_COST <= res.reward <= 0.0
        assert abs(res.state.raw.theta_dot) <= 8.0
        assert -math.pi <= res.state.raw.theta < math.pi
        total += res.reward
        state = res.state
    assert res.done
    assert -200 * pendulum.MAX_STEP_COST <= total <= 0.0


# ---- Leduc ---------------------------------------------------------------

def oracle_payoffs(cards, actions):
    """Independent referee: replays an action list under the Leduc rules."""
    contrib = [1, 1]
    rnd, raises, acted, player = 0, 0, 0, 0
    for a in actions:
        if a == 0:
            return (-contrib[0], contrib[0]) if player == 0 else (contrib[1], -contrib[1])
        if a == 2:
            contrib[player] = contrib[1 - player] + (2, 4)[rnd]
            raises += 1
            acted += 1
        else:
            contrib[player] = contrib[1 - player]
            acted += 1
            if acted >= 2:
                if rnd == 1:
                    break
                rnd, raises, acted, player = 1, 0, 0, 0
                continue
        player = 1 - player
    assert contrib[0] == contrib[1]
    pub = cards[2] // 2

    def strength(c):
        return (1 if c // 2 == pub else 0, c // 2)

    s0, s1 = strength(cards[0]), strength(cards[1])
    pot_share = contrib[0]
    if s0 == s1:
        return (0, 0)
    return (pot_share, -pot_share) if s0 > s1 else (-pot_share, pot_share)


def walk(state, actions, out):
    if state.done:
        out.append((tuple(actions), state.raw.payoffs))
        return
    for a in range(3):
        if state.mask[a]:
            walk(leduc.leduc_step(state, a).state, actions + [a], out)
        else:
            with pytest.raises(IllegalActionError):
                leduc.leduc_step(state, a)


def all_deals():
    return [(a, b, c) for a in range(6) for b in range(6) for c in range(6) if len({a, b, c}) == 3]


def test_leduc_exhaustive_zero_sum_and_rules():
    n_terminal = 0
    for deal in all_deals():
        out = []
        walk(leduc.leduc_state(deal), [], out)
        for actions, payoffs in out:
            assert payoffs[0] + payoffs[1] == 0
            assert payoffs == oracle_payoffs(deal, actions)
        n_terminal += len(out)
    # per deal: 9 round-one continuations times 9 round-two endings, plus round-one folds
    assert n_terminal == 120 * (4 + 5 * 9)


def test_leduc_check_check_pair_wins_ante():
    # seat 0 holds J (card 0), public J (card 1), seat 1 holds K
    state = leduc.leduc_state((0, 4, 1))
    for _ in range(4):
        res = leduc.leduc_step(state, leduc.CALL)
        state = res.state
    assert state.done and state.raw.payoffs == (1, -1)


def test_leduc_fold_to_first_bet():
    for deal in [(0, 4, 1), (4, 0, 1), (2, 3, 5)]:
        s = leduc.leduc_step(leduc.leduc_state(deal), leduc.RAISE).state
        res = leduc.leduc_step(s, leduc.FOLD)
        assert res.done and res.state.raw.payoffs == (1, -1)


def test_leduc_sparse_rewards():
    state = leduc.leduc_state((0, 4, 1))
    res = leduc.leduc_step(state, leduc.RAISE)
    assert res.reward == 0.0 and not res.done


def test_leduc_fold_illegal_without_bet():
    state = leduc.leduc_state((0, 4, 1))
    assert not state.mask[leduc.FOLD]
    with pytest.raises(IllegalActionError):
        leduc.leduc_step(state, leduc.FOLD)


def test_leduc_raise_cap():
    s = leduc.leduc_state((0, 4, 1))
    s = leduc.leduc_step(s, leduc.RAISE).state
    s = leduc.leduc_step(s, leduc.RAISE).state
    assert not s.mask[leduc.RAISE] and s.mask[leduc.FOLD] and s.mask[leduc.CALL]


def test_leduc_encoding():
    raw = leduc.leduc_state((3, 0, 5)).raw
    obs = leduc.encode_observation(raw, 0)
    assert obs.shape == (36,)
    assert obs[3] == 1.0 and obs[:6].sum() == 1.0
    assert obs[6 + 6] == 1.0  # public card hidden in round one
    assert obs[13] == 1.0
    assert obs.sum() == 6.0


def test_leduc_deterministic_deals():
    assert leduc.deal_from_seed(5) == leduc.deal_from_seed(5)
    a = leduc.LeducVsOpponent().reset(17)
    b = leduc.LeducVsOpponent().reset(17)
    assert np.array_equal(a.obs, b.obs) and a.raw == b.raw


def test_leduc_vs_opponent_payoff_at_end():
    env = leduc.LeducVsOpponent()
    for seed in range(50):
        state = env.reset(seed)
        assert not state.done and state.mask.any()
        while True:
            res = env.step(int(np.flatnonzero(state.mask)[-1]))
            if res.done:
                assert res.reward == res.info["payoffs"][env.seat]
                break
            assert res.reward == 0.0
            state = res.state


# ---- registry and vectorized stepping ------------------------------------

def test_env_spec_dims():
    assert env_spec("mountaincar")[0] == 2
    assert env_spec("pendulum")[0] == 3
    assert env_spec("leduc")[0] == 36
    with pytest.raises(ConfigError):
        make_env("acrobot")


def test_vecenv_deterministic_and_replayable():
    def run():
        vec = VecEnv("mountaincar", 3, 42)
        obs, _ = vec.reset()
        finished = []
        for _ in range(450):
            obs, _, _, _, _, _, fin = vec.step(np.full(3, 2))
            finished.extend(fin)
        return finished

    a, b = run(), run()
    assert a == b and len(a) > 0
    ret, length, seed = a[0]
    env = make_env("mountaincar")
    assert run_episode(env, lambda o, m: 2, seed) == (ret, length)
