import numpy as np
import pytest

from hairl.agents.ppo import PPOConfig
from hairl.errors import ConfigError, TrainingDivergedError
from hairl.expert import record_demos
from hairl.irl import DemoBatch, HybridConfig, irl_train

SMALL_PPO = PPOConfig(n_envs=2, n_steps=64, hidden=(16, 16))


class PushWithVelocity:
    """Deterministic MountainCar heuristic: push in the direction of motion."""

    def act(self, obs, mask=None, rng=None, deterministic=True):
        return 2 if obs[1] >= 0 else 0


class RandomTorque:
    def act(self, obs, mask=None, rng=None, deterministic=True):
        return rng.uniform(-2, 2, size=1)


@pytest.fixture(scope="module")
def mc_demos():
    return record_demos(PushWithVelocity(), "mountaincar", 5, 0)


def small(**kw):
    return HybridConfig(**{"iterations": 3, "eval_every": 0, "disc_hidden": (16,), "disc_batch": 64,
                           "ppo": SMALL_PPO, **kw})


def losses(rows):
    return {(i, m): v for i, m, v in rows if "loss" in m or m.startswith("d_")}


def test_collapsed_hybrid_matches_airl_path(mc_demos):
    cfg = HybridConfig.airl(iterations=4, eval_every=0, disc_hidden=(16,), disc_batch=64, ppo=SMALL_PPO)
    hyb = irl_train(cfg, "mountaincar", mc_demos, seed=3, mode="hairl")
    ref = irl_train(cfg, "mountaincar", mc_demos, seed=3, mode="airl")
    a, b = losses(hyb.rows), losses(ref.rows)
    shared = set(a) & set(b)
    assert {m for _, m in shared} >= {"disc_loss", "policy_loss", "airl_policy_loss", "value_loss"}
    assert max(abs(a[k] - b[k]) for k in shared) <= 1e-10
    assert np.array_equal(hyb.disc.net.get_flat(), ref.disc.net.get_flat())


def test_hybrid_terms_change_the_run(mc_demos):
    base = irl_train(small(alpha=0.0, beta=0.0, sigma_start=0.0, sigma_end=0.0), "mountaincar", mc_demos, 1)
    hyb = irl_train(small(), "mountaincar", mc_demos, 1)
    assert base.last("disc_loss") != hyb.last("disc_loss")


def test_run_is_deterministic(mc_demos):
    a = irl_train(small(), "mountaincar", mc_demos, 7)
    b = irl_train(small(), "mountaincar", mc_demos, 7)
    assert a.rows == b.rows


def test_behavior_cloning_sanity(mc_demos):
    demos = record_demos(PushWithVelocity(), "mountaincar", 10, 0)
    cfg = HybridConfig(alpha=1.0, beta=0.0, iterations=40, eval_every=0, disc_hidden=(16,),
                       ppo=PPOConfig(n_envs=2, n_steps=128, lr=1e-3, hidden=(16, 16)))
    res = irl_train(cfg, "mountaincar", demos, 0)
    _, sup = res.curve("sup_policy_loss")
    smooth = np.convolve(sup, np.ones(10) / 10, "valid")
    assert np.all(np.diff(smooth) <= 0.0)
    assert smooth[-1] < 0.1
    assert res.last("alignment") > 95.0


def test_logged_metrics_and_callback(mc_demos):
    seen = []
    res = irl_train(small(eval_every=2, eval_episodes=2), "mountaincar", mc_demos, 0,
                    callback=lambda it, pol, disc: seen.append(it))
    assert seen == [1, 2, 3]
    metrics = {m for _, m, _ in res.rows}
    assert {"disc_loss", "disc_adv_loss", "disc_sup_loss", "policy_loss", "sup_policy_loss",
            "alignment", "d_expert", "d_policy"} <= metrics
    assert list(res.curve("eval_return")[0]) == [2, 3]


def test_continuous_env_has_no_alignment():
    demos = record_demos(RandomTorque(), "pendulum", 2, 0, deterministic=False)
    res = irl_train(small(iterations=1), "pendulum", demos, 0)
    assert "alignment" not in {m for _, m, _ in res.rows}
    assert np.isfinite(res.last("disc_loss"))


def test_save_writes_policy_and_discriminator(mc_demos, tmp_path):
    res = irl_train(small(iterations=1), "mountaincar", mc_demos, 0)
    res.save(tmp_path)
    assert (tmp_path / "disc.net").exists()
    assert any(p.name != "disc.net" for p in tmp_path.iterdir())


def test_empty_demos_rejected(mc_demos):
    with pytest.raises(ConfigError):
        irl_train(small(), "mountaincar", mc_demos.head(0), 0)


def test_obs_dim_mismatch_rejected(mc_demos):
    with pytest.raises(ConfigError):
        irl_train(small(), "pendulum", mc_demos, 0)


def test_beta_needs_env_rewards(mc_demos):
    b = mc_demos.to_batch()
    bare = DemoBatch(b.obs, b.actions)
    with pytest.raises(ConfigError):
        irl_train(small(beta=0.25), "mountaincar", bare, 0)
    irl_train(small(beta=0.0, iterations=1), "mountaincar", bare, 0)


@pytest.mark.parametrize("kw", [{"alpha": 1.5}, {"beta": -0.1}, {"sigma_start": 0.1, "sigma_end": 0.5},
                                {"iterations": 0}, {"sigma_shape": "cubic"}, {"disc_lr": 0.0}])
def test_invalid_config(kw, mc_demos):
    assert small(**kw).validate()
    with pytest.raises(ConfigError):
        irl_train(small(**kw), "mountaincar", mc_demos, 0)


def test_unknown_mode(mc_demos):
    with pytest.raises(ConfigError):
        irl_train(small(), "mountaincar", mc_demos, 0, mode="gail")


def test_config_dict_round_trip():
    cfg = small(alpha=0.3, sigma_shape="geometric")
    assert HybridConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        HybridConfig.from_dict({"alpah": 0.1})
    with pytest.raises(ConfigError):
        HybridConfig.from_dict({"ppo": {"gama": 0.9}})


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_demos_abort_with_diagnostics(mc_demos):
    b = mc_demos.to_batch()
    obs = b.obs.copy()
    obs[:] = np.nan
    with pytest.raises(TrainingDivergedError) as exc:
        irl_train(small(), "mountaincar", DemoBatch(obs, b.actions, b.r_env), 0)
    assert exc.value.diagnostics["iteration"] == 1
