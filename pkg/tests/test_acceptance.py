"""Acceptance gate. One test per criterion; the terminal summary prints a
PASS/FAIL line for each.

The experiment criteria (8-11) train real experts and agents and take hours
on one CPU core. ``HAIRL_ACCEPT_SEEDS=3`` runs a smoke variant with three
seeds and proportionally scaled seed thresholds. Select with ``-m
acceptance`` or deselect with ``-m "not acceptance"``.
"""

import filecmp
import math
import os
import shutil
import time
from functools import lru_cache

import numpy as np
import pytest

import test_envs
import test_eval
import test_irl_losses
from hairl.cli import main
from hairl.envs.base import ActionSpace
from hairl.eval import reward_grid, run_tournament, significance
from hairl.expert import EXPERT_PRESETS, record_demos, train_expert
from hairl.irl import HybridConfig, SRConfig, disc_output, irl_train, noise_sigmas, perturb_actions
from hairl.pipeline import default_irl_config, default_rl_config, final_return, train_rl

pytestmark = pytest.mark.acceptance

N_MC = int(os.environ.get("HAIRL_ACCEPT_SEEDS", 10))
N_LEDUC = int(os.environ.get("HAIRL_ACCEPT_SEEDS", 20))
LEDUC_HANDS = 100_000
RETURN_BAR = -160.0


def need(k_of_10: int, n: int) -> int:
    """Seed threshold "k out of 10" scaled to ``n`` seeds."""
    return math.ceil(k_of_10 * n / 10)


def detail(request, text: str) -> None:
    request.node.user_properties.append(("detail", text))
    print(text)


# ---- exact property criteria ---------------------------------------------

@pytest.mark.criterion(1, "gradient fidelity of every loss (finite differences < 1e-4)")
def test_c01_gradient_fidelity(request):
    import test_agents
    t = time.time()
    rng = lambda: np.random.default_rng(0)  # noqa: E731
    D3, C1, C2 = test_irl_losses.D3, test_irl_losses.C1, test_irl_losses.C2
    for space in (D3, C1):
        test_irl_losses.test_grad_airl_policy_loss(space, rng())
        test_irl_losses.test_grad_disc_losses(space, rng())
        test_agents.test_policy_logp_entropy_gradients(space, rng())
    for space in (D3, C2):
        test_irl_losses.test_grad_supervised_policy_loss(space, rng())
    test_irl_losses.test_grad_hybrid_policy_loss(rng())
    test_agents.test_td_loss_gradient(rng())
    elapsed = time.time() - t
    detail(request, f"all loss gradients within 1e-4 in {elapsed:.1f}s")
    assert elapsed < 60


@pytest.fixture(scope="session")
def mc_expert():
    t = time.time()
    res = train_expert("mountaincar", seed=0)
    demos = record_demos(res.agent, "mountaincar", EXPERT_PRESETS["mountaincar"].default_demos, 0)
    return res, demos, time.time() - t


@pytest.mark.criterion(2, "AIRL collapse: zeroed hybrid run equals the AIRL path to 1e-10 over 50 iterations")
def test_c02_airl_collapse(request, mc_expert):
    _, demos, _ = mc_expert
    cfg = HybridConfig.airl(iterations=50, eval_every=0)
    t = time.time()
    hyb = irl_train(cfg, "mountaincar", demos, seed=0, mode="hairl")
    ref = irl_train(cfg, "mountaincar", demos, seed=0, mode="airl")
    elapsed = time.time() - t
    a = {(i, m): v for i, m, v in hyb.rows if "loss" in m}
    b = {(i, m): v for i, m, v in ref.rows if "loss" in m}
    shared = sorted(set(a) & set(b))
    worst = max(abs(a[k] - b[k]) for k in shared)
    its = {i for i, _ in shared}
    detail(request, f"{len(shared)} logged losses over {len(its)} iterations, max diff {worst:.1e}, {elapsed:.0f}s")
    assert its == set(range(1, 51))
    assert {"disc_loss", "policy_loss"} <= {m for _, m in shared}
    assert worst <= 1e-10
    assert elapsed < 300


@pytest.mark.criterion(3, "discriminator identity over 10^6 inputs to 1e-12")
def test_c03_discriminator_identity(request):
    t = time.time()
    rng = np.random.default_rng(0)
    f = rng.uniform(-30, 30, 1_000_000)
    logpi = rng.uniform(-30, 0, 1_000_000)
    worst = np.max(np.abs(disc_output(f, logpi) - np.exp(f) / (np.exp(f) + np.exp(logpi))))
    elapsed = time.time() - t
    detail(request, f"max |diff| {worst:.1e} in {elapsed:.2f}s")
    assert worst < 1e-12 and elapsed < 10


@pytest.mark.criterion(4, "affine mixing in alpha and beta at 5 grid points to 1e-12")
def test_c04_affine_mixing(request):
    t = time.time()
    test_irl_losses.test_policy_mixing_is_affine(np.random.default_rng(0))
    test_irl_losses.test_disc_mixing_is_affine(np.random.default_rng(1))
    elapsed = time.time() - t
    detail(request, f"policy and discriminator mixing affine in {elapsed:.2f}s")
    assert elapsed < 10


@pytest.mark.criterion(5, "noise schedule: exact endpoints, monotone, std within 2% over 10^5 draws")
def test_c05_noise_schedule(request):
    t = time.time()
    sig = noise_sigmas(256, 0.9, 0.08)
    assert sig[0] == 0.9 and sig[-1] == 0.08 and np.all(np.diff(sig) <= 0)
    assert np.allclose(noise_sigmas(3, 0.9, 0.08), [0.9, 0.49, 0.08], atol=1e-15)
    space = ActionSpace("continuous", dim=1, low=(-2.0,), high=(2.0,))
    worst = 0.0
    for s in (0.01, 0.05, 0.08):
        out = perturb_actions(np.zeros((100_000, 1)), np.full(100_000, s), space, np.random.default_rng(7))
        worst = max(worst, abs(out.std() / (s * 2.0) - 1.0))
    assert SRConfig(0.9, 0.08).enabled
    elapsed = time.time() - t
    detail(request, f"worst relative std error {100 * worst:.2f}% in {elapsed:.1f}s")
    assert worst < 0.02 and elapsed < 30


@pytest.mark.criterion(6, "Leduc exhaustive game-tree walk: zero-sum and rule-table payoffs")
def test_c06_leduc_oracle(request):
    t = time.time()
    test_envs.test_leduc_exhaustive_zero_sum_and_rules()
    elapsed = time.time() - t
    detail(request, f"all deals and terminal histories checked in {elapsed:.1f}s")
    assert elapsed < 60


@pytest.mark.criterion(7, "mbb/h units: +1000 for one big blind per hand, A-vs-A 0, antisymmetry")
def test_c07_mbb_units(request):
    t = time.time()
    test_eval.test_one_big_blind_per_hand_is_1000()
    test_eval.test_self_play_is_exactly_zero()
    test_eval.test_antisymmetry()
    test_eval.test_fold_always_loses()
    elapsed = time.time() - t
    detail(request, f"unit checks in {elapsed:.1f}s")
    assert elapsed < 60


# ---- MountainCar experiments ---------------------------------------------

@pytest.fixture(scope="session")
def mc_runs(mc_expert):
    """Lazily computed IRL -> RL runs keyed by (mode, seed, overrides)."""
    _, demos, _ = mc_expert
    timings = {"total": mc_expert[2]}

    @lru_cache(maxsize=None)
    def run(mode: str, seed: int, overrides: tuple = ()):
        t = time.time()
        cfg = default_irl_config("mountaincar", **dict(overrides))
        irl = irl_train(cfg, "mountaincar", demos, seed, mode)
        rl_cfg = default_rl_config("mountaincar")
        agent, _ = train_rl("mountaincar", irl.disc, rl_cfg, seed)
        ret = final_return("mountaincar", agent, rl_cfg.final_episodes, seed)
        timings["total"] += time.time() - t
        return {"alignment": irl.last("alignment"), "final_return": ret, "disc": irl.disc}

    run.timings = timings
    return run


@pytest.mark.criterion(8, "MountainCar: H-AIRL alignment and RL return beat AIRL")
def test_c08_mountaincar_alignment_and_return(request, mc_runs):
    seeds = range(N_MC)
    h = [mc_runs("hairl", s) for s in seeds]
    a = [mc_runs("airl", s) for s in seeds]
    gaps = [x["alignment"] - y["alignment"] for x, y in zip(h, a)]
    n_gap = sum(g >= 10.0 for g in gaps)
    n_h = sum(x["final_return"] >= RETURN_BAR for x in h)
    n_a_fail = sum(y["final_return"] < RETURN_BAR for y in a)
    hours = mc_runs.timings["total"] / 3600
    detail(request, f"gap>=10pp {n_gap}/{N_MC}, H-AIRL return>={RETURN_BAR:.0f} {n_h}/{N_MC}, "
                    f"AIRL below bar {n_a_fail}/{N_MC}, {hours:.2f} h "
                    f"(alignment {np.mean([x['alignment'] for x in h]):.1f} vs "
                    f"{np.mean([y['alignment'] for y in a]):.1f}; return "
                    f"{np.mean([x['final_return'] for x in h]):.1f} vs {np.mean([y['final_return'] for y in a]):.1f})")
    assert n_gap >= need(7, N_MC)
    assert n_h >= need(7, N_MC)
    assert n_a_fail >= need(7, N_MC)
    assert hours <= 3.0


@pytest.mark.criterion(9, "MountainCar reward grids: H-AIRL balanced, AIRL dominated by one action")
def test_c09_reward_grids(request, mc_runs):
    seeds = range(N_MC)
    runs = {(m, s): mc_runs(m, s) for m in ("hairl", "airl") for s in seeds}
    t = time.time()
    fr = {k: reward_grid(r["disc"], "mountaincar", 50).fractions() for k, r in runs.items()}
    elapsed = time.time() - t
    n_bal = sum(np.all(fr[("hairl", s)] >= 0.05) for s in seeds)
    n_dom = sum(np.max(fr[("airl", s)]) > 0.80 for s in seeds)
    mean_h = np.mean([fr[("hairl", s)] for s in seeds], axis=0)
    detail(request, f"H-AIRL balanced {n_bal}/{N_MC} (mean L/N/R {np.round(mean_h, 2).tolist()}), "
                    f"AIRL dominated {n_dom}/{N_MC}, {elapsed:.1f}s")
    assert n_dom >= need(5, N_MC)
    assert n_bal >= need(7, N_MC)
    assert elapsed < 300


@pytest.mark.criterion(11, "ablation ordering: alpha 0.1 > 1.0 and beta 0.25 > 1.0 in final return")
def test_c11_ablation_ordering(request, mc_runs):
    seeds = range(N_MC)
    start = mc_runs.timings["total"]

    def mean_return(**kw):
        return float(np.mean([mc_runs("hairl", s, tuple(sorted(kw.items())))["final_return"] for s in seeds]))

    base = mean_return()
    a1 = mean_return(alpha=1.0)
    b1 = mean_return(beta=1.0)
    hours = (mc_runs.timings["total"] - start) / 3600
    detail(request, f"alpha 0.1 {base:.1f} vs 1.0 {a1:.1f}; beta 0.25 {base:.1f} vs 1.0 {b1:.1f}; "
                    f"{N_MC} seeds, {hours:.2f} h beyond shared runs")
    assert base > a1
    assert base > b1
    assert hours <= 6.0


# ---- Leduc ---------------------------------------------------------------

@pytest.mark.criterion(10, "Leduc: H-AIRL-DQN beats AIRL-DQN head-to-head, 95% CI above 0")
def test_c10_leduc_head_to_head(request):
    t = time.time()
    expert = train_expert("leduc", seed=0)
    demos = record_demos(expert.agent, "leduc", EXPERT_PRESETS["leduc"].default_demos, 0)
    rl_cfg = default_rl_config("leduc")
    payoffs = []
    for seed in range(N_LEDUC):
        agents = {}
        for mode in ("hairl", "airl"):
            irl = irl_train(default_irl_config("leduc"), "leduc", demos, seed, mode)
            agents[mode], _ = train_rl("leduc", irl.disc, rl_cfg, seed)
        payoffs.append(run_tournament(agents["hairl"], agents["airl"], LEDUC_HANDS, seed).mbb_per_hand)
    sig = significance(payoffs)
    hours = (time.time() - t) / 3600
    detail(request, f"mean {sig.mean:+.1f} mbb/h, stderr {sig.stderr:.1f}, 95% CI [{sig.ci95[0]:+.1f}, "
                    f"{sig.ci95[1]:+.1f}], p {sig.p:.2g}, {N_LEDUC} seeds x {LEDUC_HANDS} hands, {hours:.2f} h")
    assert sig.mean > 0 and sig.ci95[0] > 0
    assert hours <= 2.0


# ---- determinism ---------------------------------------------------------

TINY = {
    "mountaincar": [
        "expert.total_steps=2000", "expert.gate=-1000.0", "expert.eval_episodes=2", "expert.max_attempts=1",
        "demos.episodes=3", "irl.iterations=2", "irl.eval_every=0", "irl.ppo.n_envs=2", "irl.ppo.n_steps=64",
        "irl.disc_hidden=[16]", "rl.total_steps=600", "rl.eval_every=300", "rl.eval_episodes=1",
        "rl.final_episodes=2", "eval.grid_resolution=5", "sweep.values=[0.0, 1.0]", "log_level=\"WARNING\"",
    ],
    "leduc": [
        "env=\"leduc\"", "expert.total_steps=1000", "expert.gate=-100000.0", "expert.eval_hands=20",
        "expert.max_attempts=1", "demos.episodes=30", "irl.iterations=1", "irl.eval_every=0", "irl.ppo.n_envs=2",
        "irl.ppo.n_steps=32", "irl.disc_hidden=[8]", "rl.total_steps=300", "rl.final_episodes=10",
        "eval.hands=20", "log_level=\"WARNING\"",
    ],
}
STAGES = {
    "mountaincar": [("expert", "expert/0"), ("demos", "demos/0"), ("irl", "irl/0/hairl"), ("rl", "rl/0/hairl"),
                    ("eval", "eval"), ("grid", "grid/0/hairl"), ("sweep", "sweep/alpha/0/0")],
    "leduc": [("expert", "expert/0"), ("demos", "demos/0"), ("irl", "irl/0/hairl"), ("rl", "rl/0/hairl"),
              ("tournament", "tournament/0")],
}


def _cli(out, stage, sets=(), config=None, seeds="0,1"):
    args = [stage, "--out", str(out)]
    if config:
        args += ["--config", str(config)]
    if seeds and stage not in ("expert", "demos"):
        args += ["--seeds", seeds]
    for s in sets:
        args += ["--set", s]
    assert main(args) == 0, (stage, args)


def _artifacts(root, stage):
    return sorted(str(p.relative_to(root)) for ext in ("*.csv", "*.jsonl") for p in (root / stage).rglob(ext))


@pytest.mark.criterion(12, "determinism: every stage rerun from its snapshot gives byte-identical CSVs")
def test_c12_snapshot_determinism(request, tmp_path):
    checked = 0
    for env, stages in STAGES.items():
        first = tmp_path / env / "first"
        for stage, _ in stages:
            _cli(first, stage, TINY[env])
        for stage, snap_dir in stages:
            second = tmp_path / env / f"re-{stage}"
            shutil.copytree(first, second)
            shutil.rmtree(second / stage)
            snap = tmp_path / env / f"{stage}.toml"
            shutil.copy(first / snap_dir / "config.toml", snap)
            _cli(second, stage, config=snap, seeds=None)
            names, again = _artifacts(first, stage), _artifacts(second, stage)
            assert names and names == again, stage
            _, mismatch, errors = filecmp.cmpfiles(first, second, names, shallow=False)
            assert not mismatch and not errors, (env, stage, mismatch)
            checked += len(names)
    detail(request, f"{checked} CSV/JSONL artifacts identical across snapshot reruns of every stage")
