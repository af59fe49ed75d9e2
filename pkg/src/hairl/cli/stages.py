"""Pipeline stages. Each reads its inputs from upstream stage directories and
writes into ``<out>/<stage>/<seed>/`` (plus ``<mode>/`` for IRL-derived
stages) together with a resolved ``config.toml`` snapshot."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from hairl.cli.config import ExperimentConfig, value_slug
from hairl.errors import ConfigError, MissingArtifactError
from hairl.eval import (curves_by_metric, reward_grid, run_tournament, significance, write_curves_csv,
                        write_tournament_csv)
from hairl.expert import EXPERT_PRESETS, load_demos, load_expert, record_demos, save_demos, train_expert
from hairl.irl import Discriminator, irl_train
from hairl.pipeline import final_return, load_rl_agent, train_rl

log = logging.getLogger(__name__)


# ---- artifact helpers ----------------------------------------------------

def stage_dir(cfg: ExperimentConfig, stage: str, seed, mode=None) -> Path:
    d = cfg.out_dir / stage / str(seed)
    return d / mode if mode else d


def require(path: Path, command: str) -> Path:
    if not Path(path).exists():
        raise MissingArtifactError(path, f"run `hairl {command}` first")
    return Path(path)


def write_rows(path, rows) -> None:
    """Per-run ``metrics.csv``: step, metric, value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "metric", "value"])
        for step, metric, value in rows:
            w.writerow([int(step), metric, repr(float(value))])


def read_rows(path) -> list:
    with open(path, newline="") as fh:
        return [(int(r["step"]), r["metric"], float(r["value"])) for r in csv.DictReader(fh)]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def pmap(fn, jobs: list, workers: int) -> list:
    """Run independent jobs, in a bounded process pool when ``workers > 1``."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def demos_path(cfg: ExperimentConfig) -> Path:
    if cfg.demos.path:
        return Path(cfg.demos.path)
    return stage_dir(cfg, "demos", cfg.expert.seed) / "demos.jsonl"


def load_checked_demos(cfg: ExperimentConfig):
    """Load the demos the IRL stage consumes and cross-check them against the config."""
    demos = load_demos(require(demos_path(cfg), "demos"))
    errors = []
    if demos.env_id != cfg.env:
        errors.append(f"demos at {demos_path(cfg)} are for env {demos.env_id!r}, config says {cfg.env!r}")
    if len(demos) == 0:
        errors.append(f"demos at {demos_path(cfg)} are empty")
    if "hairl" in cfg.modes and cfg.irl.beta > 0 and not demos.has_rewards:
        errors.append(f"irl.beta = {cfg.irl.beta} > 0 but demos at {demos_path(cfg)} carry no env rewards")
    if errors:
        raise ConfigError(errors)
    return demos


# ---- expert and demos ----------------------------------------------------

def run_expert(cfg: ExperimentConfig, seeds: list) -> dict:
    out = {}
    for seed in seeds:
        d = stage_dir(cfg, "expert", seed)
        res = train_expert(cfg.env, cfg.expert.algo or None, None, seed, cfg.expert.total_steps or None,
                           cfg.expert.gate, cfg.expert.max_attempts, cfg.expert.eval_episodes, cfg.expert.eval_hands)
        res.agent.save(d, {"algo": res.algo})
        write_rows(d / "metrics.csv", res.rows)
        write_json(d / "expert.json", {"algo": res.algo, "quality": res.quality, "gate": res.gate,
                                       "attempts": res.attempts})
        cfg.save(d / "config.toml")
        log.info("expert seed %s: %s quality %.2f", seed, res.algo, res.quality)
        out[seed] = res.quality
    return out


def run_demos(cfg: ExperimentConfig, seeds: list) -> dict:
    out = {}
    for seed in seeds:
        src = stage_dir(cfg, "expert", seed)
        info = json.loads(require(src / "expert.json", "expert").read_text())
        agent = load_expert(src, info["algo"])
        n = cfg.demos.episodes or EXPERT_PRESETS[cfg.env].default_demos
        demos = record_demos(agent, cfg.env, n, seed, cfg.demos.deterministic,
                             {"expert_quality": info["quality"]}, cfg.demos.strip_folds, cfg.demos.with_rewards)
        d = stage_dir(cfg, "demos", seed)
        d.mkdir(parents=True, exist_ok=True)
        save_demos(demos, d / "demos.jsonl")
        cfg.save(d / "config.toml")
        log.info("demos seed %s: %d trajectories, %d steps", seed, len(demos), demos.n_steps)
        out[seed] = d / "demos.jsonl"
    return out


# ---- IRL and RL ----------------------------------------------------------

def _irl_job(cfg: ExperimentConfig, seed: int, mode: str, out_dir: str) -> dict:
    demos = load_checked_demos(cfg)
    res = irl_train(cfg.irl, cfg.env, demos, seed, mode)
    d = Path(out_dir)
    res.save(d)
    write_rows(d / "metrics.csv", res.rows)
    cfg.save(d / "config.toml")
    return {"seed": seed, "mode": mode, "alignment": _last(res.rows, "alignment")}


def _rl_job(cfg: ExperimentConfig, seed: int, mode: str, irl_dir: str, out_dir: str) -> dict:
    disc = Discriminator.load(require(Path(irl_dir) / "disc.net", "irl"))
    agent, rows = train_rl(cfg.env, disc, cfg.rl, seed)
    ret = final_return(cfg.env, agent, cfg.rl.final_episodes, seed)
    d = Path(out_dir)
    agent.save(d, {"mode": mode, "algo": cfg.rl.algo})
    write_rows(d / "metrics.csv", rows)
    write_json(d / "final.json", {"final_return": ret, "episodes": cfg.rl.final_episodes})
    cfg.save(d / "config.toml")
    return {"seed": seed, "mode": mode, "final_return": ret}


def _last(rows, metric):
    vals = [v for _, m, v in rows if m == metric]
    return vals[-1] if vals else None


def run_irl(cfg: ExperimentConfig) -> list:
    load_checked_demos(cfg)
    jobs = [(cfg, s, m, str(stage_dir(cfg, "irl", s, m))) for s in cfg.seeds for m in cfg.modes]
    return pmap(_irl_job, jobs, cfg.workers)


def run_rl(cfg: ExperimentConfig) -> list:
    load_checked_demos(cfg)
    jobs = []
    for s in cfg.seeds:
        for m in cfg.modes:
            irl_dir = stage_dir(cfg, "irl", s, m)
            require(irl_dir / "disc.net", "irl")
            jobs.append((cfg, s, m, str(irl_dir), str(stage_dir(cfg, "rl", s, m))))
    return pmap(_rl_job, jobs, cfg.workers)


# ---- evaluation ----------------------------------------------------------

def run_eval(cfg: ExperimentConfig) -> dict:
    """Aggregate IRL and RL curves per mode; ``summary.csv`` holds the per-seed endpoints."""
    out_dir = cfg.out_dir / "eval"
    summary = []
    aggregates = {}
    for mode in cfg.modes:
        per_seed = {}
        for s in cfg.seeds:
            irl_rows = read_rows(require(stage_dir(cfg, "irl", s, mode) / "metrics.csv", "irl"))
            rl_dir = stage_dir(cfg, "rl", s, mode)
            rl_rows = read_rows(require(rl_dir / "metrics.csv", "rl"))
            final = json.loads(require(rl_dir / "final.json", "rl").read_text())["final_return"]
            per_seed[s] = [(i, f"irl.{m}", v) for i, m, v in irl_rows] + [(i, f"rl.{m}", v) for i, m, v in rl_rows]
            summary.append((mode, s, _last(irl_rows, "alignment"), final))
        aggregates[mode] = curves_by_metric(per_seed)
        (out_dir / mode).mkdir(parents=True, exist_ok=True)
        write_curves_csv(out_dir / mode / "curves.csv", aggregates[mode])
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "seed", "alignment", "final_return"])
        for mode, s, align, final in summary:
            w.writerow([mode, s, "" if align is None else repr(align), repr(float(final))])
    cfg.save(out_dir / "config.toml")
    return {"summary": summary, "curves": aggregates}


def _tournament_job(cfg: ExperimentConfig, seed: int) -> tuple:
    a_mode, b_mode = cfg.modes[0], cfg.modes[1]
    agents = [load_rl_agent(require(stage_dir(cfg, "rl", seed, m) / "final.json", "rl").parent, cfg.rl.algo)
              for m in (a_mode, b_mode)]
    res = run_tournament(agents[0], agents[1], cfg.eval.hands, seed)
    d = stage_dir(cfg, "tournament", seed)
    d.mkdir(parents=True, exist_ok=True)
    write_json(d / "result.json", {"a": a_mode, "b": b_mode, "hands": res.hands, "mbb_per_hand": res.mbb_per_hand})
    cfg.save(d / "config.toml")
    return seed, res


def run_tournaments(cfg: ExperimentConfig) -> dict:
    """Head-to-head of the first two modes' RL agents, one mirrored match per seed."""
    if cfg.env != "leduc":
        raise ConfigError(f"tournaments need env 'leduc', got {cfg.env!r}")
    if len(cfg.modes) < 2:
        raise ConfigError("tournaments need two modes, e.g. modes = ['hairl', 'airl']")
    results = dict(pmap(_tournament_job, [(cfg, s) for s in cfg.seeds], cfg.workers))
    out_dir = cfg.out_dir / "tournament"
    write_tournament_csv(out_dir / "tournament.csv", results)
    payload = {"a": cfg.modes[0], "b": cfg.modes[1]}
    if len(results) >= 2:
        sig = significance([results[s].mbb_per_hand for s in sorted(results)])
        payload.update({"mean": sig.mean, "stderr": sig.stderr, "p": sig.p, "n": sig.n,
                        "ci95": list(sig.ci95), "significant": sig.significant})
    write_json(out_dir / "significance.json", payload)
    return results


def run_grids(cfg: ExperimentConfig) -> dict:
    """Argmax-action maps of the learned reward for every seed and mode."""
    if cfg.env != "mountaincar":
        raise ConfigError(f"reward grids need env 'mountaincar', got {cfg.env!r}")
    fractions = {}
    for s in cfg.seeds:
        for m in cfg.modes:
            disc = Discriminator.load(require(stage_dir(cfg, "irl", s, m) / "disc.net", "irl"))
            grid = reward_grid(disc, cfg.env, cfg.eval.grid_resolution)
            d = stage_dir(cfg, "grid", s, m)
            d.mkdir(parents=True, exist_ok=True)
            grid.write_csv(d / "reward_grid.csv")
            cfg.save(d / "config.toml")
            fractions[(s, m)] = grid.fractions()
    with open(cfg.out_dir / "grid" / "fractions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "mode", "L", "N", "R"])
        for (s, m), fr in fractions.items():
            w.writerow([s, m, *(repr(float(x)) for x in fr)])
    return fractions


# ---- sweeps --------------------------------------------------------------

def _sweep_job(cfg: ExperimentConfig, seed: int, out_dir: str) -> dict:
    demos = load_checked_demos(cfg)
    d = Path(out_dir)
    irl = irl_train(cfg.irl, cfg.env, demos, seed, "hairl")
    agent, rl_rows = train_rl(cfg.env, irl.disc, cfg.rl, seed)
    ret = final_return(cfg.env, agent, cfg.rl.final_episodes, seed)
    rows = [(i, f"irl.{m}", v) for i, m, v in irl.rows] + [(i, f"rl.{m}", v) for i, m, v in rl_rows]
    d.mkdir(parents=True, exist_ok=True)
    write_rows(d / "metrics.csv", rows)
    write_json(d / "final.json", {"final_return": ret, "alignment": _last(irl.rows, "alignment")})
    cfg.save(d / "config.toml")
    return {"seed": seed, "rows": rows, "final_return": ret, "alignment": _last(irl.rows, "alignment")}


def sweep_configs(cfg: ExperimentConfig) -> dict:
    """One config per sweep value, identical to ``cfg`` except for the swept field."""
    out, errors = {}, []
    for v in cfg.sweep.grid():
        c = replace(cfg, irl=replace(cfg.irl, **{cfg.sweep.param: float(v)}), modes=["hairl"])
        errors += [f"{cfg.sweep.param}={v}: {e}" for e in c.irl.validate()]
        out[v] = c
    if errors:
        raise ConfigError(errors)
    return out


def run_sweep(cfg: ExperimentConfig) -> dict:
    """One-factor-at-a-time sweep over ``sweep.param``: IRL then RL per value and seed."""
    configs = sweep_configs(cfg)
    load_checked_demos(cfg)
    base = cfg.out_dir / "sweep" / cfg.sweep.param
    jobs = [(c, s, str(base / value_slug(v) / str(s))) for v, c in configs.items() for s in cfg.seeds]
    results = pmap(_sweep_job, jobs, cfg.workers)
    by_value: dict = {}
    for (c, s, _), r in zip(jobs, results):
        by_value.setdefault(getattr(c.irl, cfg.sweep.param), []).append(r)
    with open(base / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "n_seeds", "alignment_mean", "alignment_std", "final_return_mean", "final_return_std"])
        for v, rs in by_value.items():
            write_curves_csv(base / value_slug(v) / "curves.csv", curves_by_metric({r["seed"]: r["rows"] for r in rs}))
            aligns = [r["alignment"] for r in rs if r["alignment"] is not None]
            rets = np.array([r["final_return"] for r in rs])
            w.writerow([repr(v), len(rs),
                        repr(float(np.mean(aligns))) if aligns else "", repr(float(np.std(aligns))) if aligns else "",
                        repr(float(rets.mean())), repr(float(rets.std()))])
    return by_value
