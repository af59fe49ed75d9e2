"""Experiment configuration: TOML files with one section per stage, dotted
``--set`` overrides and fully resolved snapshots.

Example::

    [experiment]
    env = "mountaincar"
    seeds = [0, 1, 2]

    [irl]
    alpha = 0.1

    [irl.ppo]
    lr = 3e-4

Sections ``irl`` and ``rl`` start from the env's presets, so a file only
lists what it changes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import tomli
import tomli_w

from hairl.envs import ENV_IDS
from hairl.errors import ConfigError
from hairl.irl import MODES, HybridConfig
from hairl.pipeline import RLConfig, default_irl_config, default_rl_config

SWEEP_PARAMS = ("alpha", "beta", "sigma_start", "sigma_end")
SWEEP_GRIDS = {
    "alpha": [0.0, 0.1, 0.5, 1.0],
    "beta": [0.0, 0.25, 0.5, 1.0],
    "sigma_start": [0.1, 0.5, 0.9, 1.0],
    "sigma_end": [0.0, 0.08, 0.3, 0.5],
}


@dataclass
class ExpertSection:
    seed: int = 0
    algo: str = ""
    total_steps: int = 0
    gate: Optional[float] = None
    max_attempts: int = 3
    eval_episodes: int = 100
    eval_hands: int = 100_000


@dataclass
class DemoSection:
    episodes: int = 0
    deterministic: bool = True
    strip_folds: bool = False
    with_rewards: bool = True
    path: str = ""


@dataclass
class EvalSection:
    hands: int = 100_000
    grid_resolution: int = 50


@dataclass
class SweepSection:
    param: str = "alpha"
    values: list = field(default_factory=list)

    def grid(self) -> list:
        return list(self.values) if self.values else list(SWEEP_GRIDS.get(self.param, []))


@dataclass
class ExperimentConfig:
    env: str = "mountaincar"
    seeds: list = field(default_factory=lambda: list(range(10)))
    out: str = "runs"
    modes: list = field(default_factory=lambda: list(MODES))
    workers: int = 1
    log_level: str = "INFO"
    expert: ExpertSection = field(default_factory=ExpertSection)
    demos: DemoSection = field(default_factory=DemoSection)
    irl: HybridConfig = field(default_factory=HybridConfig)
    rl: RLConfig = field(default_factory=RLConfig)
    eval: EvalSection = field(default_factory=EvalSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def validate(self) -> list[str]:
        """Every problem at once, not just the first."""
        errors = []
        if self.env not in ENV_IDS:
            errors.append(f"experiment.env must be one of {ENV_IDS}, got {self.env!r}")
        if not self.seeds:
            errors.append("experiment.seeds is empty")
        elif any(not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in self.seeds):
            errors.append(f"experiment.seeds must be non-negative integers, got {self.seeds}")
        bad_modes = [m for m in self.modes if m not in MODES]
        if bad_modes or not self.modes:
            errors.append(f"experiment.modes must be a non-empty subset of {MODES}, got {self.modes}")
        if self.workers < 1:
            errors.append(f"experiment.workers must be >= 1, got {self.workers}")
        if self.expert.algo not in ("", "dqn", "ppo"):
            errors.append(f"expert.algo must be 'dqn' or 'ppo', got {self.expert.algo!r}")
        if self.expert.max_attempts < 1:
            errors.append(f"expert.max_attempts must be >= 1, got {self.expert.max_attempts}")
        if self.demos.episodes < 0:
            errors.append(f"demos.episodes must be >= 0, got {self.demos.episodes}")
        if self.demos.strip_folds and self.env != "leduc":
            errors.append("demos.strip_folds applies to leduc only")
        if self.eval.hands < 2 or self.eval.hands % 2:
            errors.append(f"eval.hands must be a positive even number, got {self.eval.hands}")
        if self.eval.grid_resolution < 2:
            errors.append(f"eval.grid_resolution must be >= 2, got {self.eval.grid_resolution}")
        if self.sweep.param not in SWEEP_PARAMS:
            errors.append(f"sweep.param must be one of {SWEEP_PARAMS}, got {self.sweep.param!r}")
        for v in self.sweep.values:
            if not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
                errors.append(f"sweep value {v!r} for {self.sweep.param} lies outside [0, 1]")
        errors += [f"irl: {e}" for e in self.irl.validate()]
        errors += [f"rl: {e}" for e in self.rl.validate()]
        if self.rl.algo == "dqn" and self.env == "pendulum":
            errors.append("rl.algo 'dqn' needs discrete actions; pendulum is continuous")
        if "hairl" in self.modes and self.irl.beta > 0 and not self.demos.with_rewards:
            errors.append("irl.beta > 0 requires demonstrations recorded with env rewards")
        return errors

    def check(self) -> "ExperimentConfig":
        errors = self.validate()
        if errors:
            raise ConfigError(errors)
        return self

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def to_dict(self) -> dict:
        d = {
            "experiment": {"env": self.env, "seeds": list(self.seeds), "out": self.out, "modes": list(self.modes),
                           "workers": self.workers, "log_level": self.log_level},
            "expert": asdict(self.expert),
            "demos": asdict(self.demos),
            "irl": self.irl.to_dict(),
            "rl": self.rl.to_dict(),
            "eval": asdict(self.eval),
            "sweep": {"param": self.sweep.param, "values": list(self.sweep.values)},
        }
        return _drop_none(d)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_toml())


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d


def _section(klass, values: dict, name: str, errors: list):
    known = {f.name for f in fields(klass)}
    bad = sorted(set(values) - known)
    errors.extend(f"unknown {name} option {k!r}" for k in bad)
    return klass(**{k: v for k, v in values.items() if k in known})


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _known(values: dict, template: dict, name: str, errors: list) -> dict:
    """Drop keys absent from ``template`` (recursively), recording each as an error."""
    out = {}
    for k, v in values.items():
        if k not in template:
            errors.append(f"unknown {name} option {k!r}")
        elif isinstance(template[k], dict) and isinstance(v, dict):
            out[k] = _known(v, template[k], f"{name}.{k}", errors)
        else:
            out[k] = v
    return out


def from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config; all unknown keys and bad values are reported together."""
    raw = dict(raw)
    errors: list = []
    known = {"experiment", "expert", "demos", "irl", "rl", "eval", "sweep"}
    errors += [f"unknown config section {k!r}" for k in sorted(set(raw) - known)]
    exp = dict(raw.get("experiment", {}))
    exp_known = {"env", "seeds", "out", "modes", "workers", "log_level"}
    errors += [f"unknown experiment option {k!r}" for k in sorted(set(exp) - exp_known)]
    env = exp.get("env", "mountaincar")
    base = ExperimentConfig(**{k: v for k, v in exp.items() if k in exp_known})
    if env in ENV_IDS:
        irl_base, rl_base = default_irl_config(env).to_dict(), default_rl_config(env).to_dict()
    else:
        irl_base, rl_base = HybridConfig().to_dict(), RLConfig().to_dict()
    for name, base_d, builder in (("irl", irl_base, HybridConfig.from_dict), ("rl", rl_base, RLConfig.from_dict)):
        try:
            setattr(base, name, builder(_known(_merge(base_d, raw.get(name, {})), base_d, name, errors)))
        except ConfigError as exc:
            errors += exc.errors
        except TypeError as exc:
            errors.append(f"{name}: {exc}")
    base.expert = _section(ExpertSection, raw.get("expert", {}), "expert", errors)
    base.demos = _section(DemoSection, raw.get("demos", {}), "demos", errors)
    base.eval = _section(EvalSection, raw.get("eval", {}), "eval", errors)
    base.sweep = _section(SweepSection, raw.get("sweep", {}), "sweep", errors)
    try:
        errors += base.validate()
    except TypeError as exc:
        errors.append(f"bad value type: {exc}")
    if errors:
        raise ConfigError(errors)
    return base


def parse_value(text: str):
    """A TOML literal (``0.5``, ``true``, ``[1, 2]``, ``"x"``) or else the bare string."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list) -> dict:
    """Apply ``key.path=value`` strings on top of a raw config dict."""
    raw = _merge({}, raw)
    errors = []
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            errors.append(f"override {item!r} is not of the form key=value")
            continue
        path = key.strip().split(".")
        if len(path) == 1:
            path = ["experiment", *path]
        node = raw
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                errors.append(f"override {item!r} descends into a non-table")
                break
        else:
            node[path[-1]] = parse_value(value.strip())
    if errors:
        raise ConfigError(errors)
    return raw


def parse_seeds(text: str) -> list:
    """``"0,3,5"``, ``"0-9"`` or a mix such as ``"0-2,7"``."""
    seeds = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = (int(x) for x in part.split("-", 1))
                if hi < lo:
                    raise ValueError
                seeds.extend(range(lo, hi + 1))
            elif part:
                seeds.append(int(part))
    except ValueError:
        raise ConfigError(f"cannot parse seed list {text!r}; use e.g. 0,1,2 or 0-9") from None
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def load_config(path=None, overrides=(), seeds: Optional[str] = None, out: Optional[str] = None) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            raw = tomli.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    raw = apply_overrides(raw, list(overrides))
    if seeds is not None:
        raw.setdefault("experiment", {})["seeds"] = parse_seeds(seeds)
    if out is not None:
        raw.setdefault("experiment", {})["out"] = out
    return from_dict(raw)


def value_slug(v: float) -> str:
    """Directory-safe label for a sweep value."""
    if isinstance(v, float) and math.isfinite(v) and v.is_integer():
        v = int(v)
    return str(v)
