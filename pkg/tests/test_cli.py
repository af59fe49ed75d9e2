import csv
import filecmp
import json
import shutil

import pytest
import tomli

from hairl.cli import main
from hairl.cli.config import SWEEP_GRIDS, ExperimentConfig, from_dict, load_config, parse_seeds, parse_value
from hairl.errors import ConfigError

TINY_MC = [
    "expert.total_steps=2000", "expert.gate=-1000.0", "expert.eval_episodes=2", "expert.max_attempts=1",
    "demos.episodes=3", "irl.iterations=2", "irl.eval_every=0", "irl.ppo.n_envs=2", "irl.ppo.n_steps=64",
    "irl.disc_hidden=[16]", "rl.total_steps=600", "rl.eval_every=300", "rl.eval_episodes=1",
    "rl.final_episodes=2", "eval.grid_resolution=5", "log_level=\"WARNING\"",
]


def cli(out, command, *extra, seeds="0,1", sets=TINY_MC):
    args = [command, "--out", str(out)]
    if seeds:
        args += ["--seeds", seeds]
    for s in sets:
        args += ["--set", s]
    return main(args + list(extra))


def full_pipeline(out, sets=TINY_MC):
    assert cli(out, "expert", seeds=None, sets=sets) == 0
    assert cli(out, "demos", seeds=None, sets=sets) == 0
    for stage in ("irl", "rl", "eval", "grid"):
        assert cli(out, stage, sets=sets) == 0, stage


@pytest.fixture(scope="module")
def mc_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("mc")
    full_pipeline(out)
    return out


def csvs(root):
    return sorted(p.relative_to(root) for p in root.rglob("*.csv"))


def test_pipeline_emits_artifacts(mc_run):
    names = {p.name for p in csvs(mc_run)}
    assert {"metrics.csv", "curves.csv", "summary.csv", "reward_grid.csv", "fractions.csv"} <= names
    for stage in ("irl", "rl", "grid"):
        for seed in ("0", "1"):
            for mode in ("hairl", "airl"):
                assert (mc_run / stage / seed / mode / "config.toml").exists()
    with open(mc_run / "eval" / "hairl" / "curves.csv") as fh:
        head = next(csv.reader(fh))
    assert head == ["step", "metric", "mean", "std", "n_seeds"]
    rows = list(csv.DictReader(open(mc_run / "eval" / "summary.csv")))
    assert len(rows) == 4 and {r["mode"] for r in rows} == {"hairl", "airl"}


def test_rerun_is_byte_identical(mc_run, tmp_path):
    full_pipeline(tmp_path)
    files = csvs(mc_run)
    assert files == csvs(tmp_path)
    match, mismatch, errors = filecmp.cmpfiles(mc_run, tmp_path, [str(f) for f in files], shallow=False)
    assert not mismatch and not errors


def test_snapshot_reproduces_stage_without_upstream(mc_run, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(mc_run, out)
    target = out / "irl" / "1" / "hairl"
    before = (target / "metrics.csv").read_bytes()
    snap = target / "config.toml"
    shutil.copy(snap, tmp_path / "snap.toml")
    shutil.rmtree(out / "irl")
    shutil.rmtree(out / "expert")  # upstream of demos: must not be needed
    assert main(["irl", "--config", str(tmp_path / "snap.toml"), "--out", str(out), "--seeds", "1"]) == 0
    assert (target / "metrics.csv").read_bytes() == before


def test_snapshot_is_fully_resolved(mc_run):
    snap = tomli.loads((mc_run / "irl" / "0" / "hairl" / "config.toml").read_text())
    assert snap["irl"]["iterations"] == 2 and snap["irl"]["ppo"]["n_steps"] == 64
    assert snap["experiment"]["seeds"] == [0, 1]
    assert from_dict(snap).to_dict() == snap


def test_missing_upstream_names_path(tmp_path, capsys):
    assert cli(tmp_path, "irl") == 1
    err = capsys.readouterr().err
    assert str(tmp_path / "demos" / "0" / "demos.jsonl") in err and "hairl demos" in err


def test_rl_with_beta_and_rewardless_demos_is_config_error(mc_run, tmp_path, capsys):
    out = tmp_path / "nr"
    shutil.copytree(mc_run, out, ignore=shutil.ignore_patterns("rl", "eval", "grid"))
    sets = [*TINY_MC, "demos.with_rewards=false", "irl.beta=0.0"]
    assert cli(out, "demos", seeds=None, sets=sets) == 0
    assert cli(out, "rl", sets=[*TINY_MC, "irl.beta=0.25"]) == 2
    assert "carry no env rewards" in capsys.readouterr().err
    assert not (out / "rl").exists()


def test_config_errors_reported_together(tmp_path, capsys):
    code = cli(tmp_path, "irl", sets=["irl.alpha=2.0", "irl.bogus=1", "eval.hands=3"])
    assert code == 2
    err = capsys.readouterr().err
    assert "alpha" in err and "bogus" in err and "eval.hands" in err


def test_bad_config_file(tmp_path):
    (tmp_path / "c.toml").write_text("[irl\nalpha = ")
    assert main(["irl", "--config", str(tmp_path / "c.toml")]) == 2
    assert main(["irl", "--config", str(tmp_path / "missing.toml")]) == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code == 2


def test_tournament_and_grid_env_guards(tmp_path):
    assert cli(tmp_path, "tournament") == 2
    assert cli(tmp_path, "grid", sets=["env=\"pendulum\"", "rl.algo=\"ppo\""]) == 2


def test_sweep(mc_run, tmp_path):
    out = tmp_path / "sw"
    shutil.copytree(mc_run, out, ignore=shutil.ignore_patterns("irl", "rl", "eval", "grid"))
    assert cli(out, "sweep", "--param", "alpha", "--values", "0,0.1,0.5,1", seeds="0") == 0
    base = out / "sweep" / "alpha"
    assert sorted(p.name for p in base.iterdir() if p.is_dir()) == ["0", "0.1", "0.5", "1"]
    assert all((base / v / "curves.csv").exists() for v in ("0", "0.1", "0.5", "1"))
    rows = list(csv.DictReader(open(base / "summary.csv")))
    assert [float(r["value"]) for r in rows] == [0.0, 0.1, 0.5, 1.0]
    snaps = [tomli.loads((base / v / "0" / "config.toml").read_text()) for v in ("0", "0.1", "0.5", "1")]
    for s in snaps:
        assert s["irl"].pop("alpha") in (0.0, 0.1, 0.5, 1.0)
    assert all(s == snaps[0] for s in snaps)


def test_sweep_rejects_out_of_range(tmp_path):
    assert cli(tmp_path, "sweep", "--param", "beta", "--values", "0,1.5") == 2
    assert cli(tmp_path, "sweep", "--param", "gamma", "--values", "0.5") == 2


def test_default_sweep_grids_hold_reference_points():
    refs = {"alpha": 0.1, "beta": 0.25, "sigma_start": 0.9, "sigma_end": 0.08}
    for param, ref in refs.items():
        cfg = from_dict({"sweep": {"param": param}})
        assert ref in cfg.sweep.grid()
        assert SWEEP_GRIDS[param] == cfg.sweep.grid()


def test_defaults():
    cfg = load_config()
    assert cfg.seeds == list(range(10)) and cfg.modes == ["hairl", "airl"]
    assert (cfg.irl.alpha, cfg.irl.beta, cfg.irl.sigma_start, cfg.irl.sigma_end) == (0.1, 0.25, 0.9, 0.08)
    assert isinstance(cfg, ExperimentConfig)
    assert load_config(overrides=["env=\"pendulum\""]).rl.algo == "ppo"


def test_parse_helpers():
    assert parse_seeds("0-2,7") == [0, 1, 2, 7]
    with pytest.raises(ConfigError):
        parse_seeds("3-1")
    assert parse_value("0.5") == 0.5 and parse_value("[1, 2]") == [1, 2] and parse_value("hello") == "hello"


TINY_LEDUC = [
    "env=\"leduc\"", "expert.total_steps=1000", "expert.gate=-100000.0", "expert.eval_hands=20",
    "expert.max_attempts=1", "demos.episodes=30", "irl.iterations=1", "irl.eval_every=0",
    "irl.ppo.n_envs=2", "irl.ppo.n_steps=32", "irl.disc_hidden=[8]", "rl.total_steps=300",
    "rl.final_episodes=10", "eval.hands=20", "workers=2", "log_level=\"WARNING\"",
]


def test_leduc_tournament_pipeline(tmp_path):
    for stage in ("expert", "demos"):
        assert cli(tmp_path, stage, seeds=None, sets=TINY_LEDUC) == 0
    for stage in ("irl", "rl", "tournament"):
        assert cli(tmp_path, stage, sets=TINY_LEDUC) == 0, stage
    rows = list(csv.DictReader(open(tmp_path / "tournament" / "tournament.csv")))
    assert [r["seed"] for r in rows] == ["0", "1"] and all(r["hands"] == "20" for r in rows)
    sig = json.loads((tmp_path / "tournament" / "significance.json").read_text())
    assert sig["a"] == "hairl" and sig["n"] == 2 and "p" in sig
