"""Command-line entry point: ``hairl <command> [--config F] [--out D] [--seeds S] [--set k=v ...]``.

Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from hairl.cli.config import ExperimentConfig, load_config, parse_seeds, parse_value
from hairl.cli import stages
from hairl.errors import ConfigError

log = logging.getLogger("hairl")

COMMANDS = {
    "expert": "train the expert on the true env reward",
    "demos": "record demonstrations from the trained expert",
    "irl": "run AIRL / H-AIRL for every seed and mode",
    "rl": "train RL agents on the learned rewards",
    "eval": "aggregate curves and per-seed results",
    "tournament": "Leduc head-to-head between the first two modes' RL agents",
    "grid": "MountainCar argmax-action maps of the learned rewards",
    "sweep": "one-factor-at-a-time sweep of alpha, beta, sigma_start or sigma_end",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--out", help="output directory (overrides experiment.out)")
    common.add_argument("--seeds", help="seed list, e.g. 0,1,2 or 0-9")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. irl.alpha=0.2 (repeatable)")
    parser = argparse.ArgumentParser(prog="hairl", description="AIRL and Hybrid-AIRL experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "sweep":
            p.add_argument("--param", help="hyperparameter to sweep (overrides sweep.param)")
            p.add_argument("--values", help="comma-separated values (overrides sweep.values)")
    return parser


def _sweep_overrides(args) -> list:
    extra = []
    if getattr(args, "param", None):
        extra.append(f'sweep.param="{args.param}"')
    if getattr(args, "values", None):
        try:
            vals = [float(parse_value(v.strip())) for v in args.values.split(",") if v.strip()]
        except (TypeError, ValueError):
            raise ConfigError(f"cannot parse sweep values {args.values!r}") from None
        extra.append(f"sweep.values={vals}")
    return extra


def run(args) -> object:
    cfg: ExperimentConfig = load_config(args.config, [*args.set, *_sweep_overrides(args)], args.seeds, args.out)
    logging.basicConfig(level=getattr(logging, str(cfg.log_level).upper(), logging.INFO),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.command in ("expert", "demos"):
        seeds = parse_seeds(args.seeds) if args.seeds else [cfg.expert.seed]
        return (stages.run_expert if args.command == "expert" else stages.run_demos)(cfg, seeds)
    return {
        "irl": stages.run_irl,
        "rl": stages.run_rl,
        "eval": stages.run_eval,
        "tournament": stages.run_tournaments,
        "grid": stages.run_grids,
        "sweep": stages.run_sweep,
    }[args.command](cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except ConfigError as exc:
        print("config error:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any stage failure maps to exit code 1
        log.debug("stage failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0
