"""Command-line entry point.

Subcommands: `train`, `evaluate`, `ablate` (no-intervention run), and
`sweep` (mixing-weight sweep). Every TrainConfig field is exposed as a
`--kebab-case` flag; `--config FILE` loads a flat `key = value` file and
explicit flags win over file values.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import (ABLATIONS, AGGREGATIONS, ALGOS, ConfigError, TrainConfig,
                     load_config_file, make_config)
from .env import TASK_VARIANTS

_CHOICES = {"task": TASK_VARIANTS, "algo": ALGOS, "ablation": ABLATIONS,
            "aggregation": AGGREGATIONS}
_TYPES = {"int": int, "float": float, "str": str}


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", metavar="FILE",
                        help="flat key = value config file")
    for f in dataclasses.fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f.name, type=_TYPES[str(f.type)],
                            default=None, choices=_CHOICES.get(f.name),
                            help=f"default: {f.default}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cimarl",
        description="Cooperative multi-agent RL with causal-influence "
                    "intrinsic rewards")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one training configuration")
    _add_config_flags(train)

    ablate = sub.add_parser("ablate", help="train with buffer-replayed actions "
                                           "instead of intervention draws")
    _add_config_flags(ablate)

    sweep = sub.add_parser("sweep", help="train one arm per mixing weight and "
                                         "rank them")
    _add_config_flags(sweep)

    ev = sub.add_parser("evaluate", help="noise-free rollouts of a checkpoint")
    ev.add_argument("--checkpoint", required=True, help="checkpoint file")
    ev.add_argument("--episodes", type=int, default=20)
    ev.add_argument("--seed", type=int, default=0)
    return parser


def _config_from_args(args) -> TrainConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {f.name: getattr(args, f.name)
                 for f in dataclasses.fields(TrainConfig)}
    return make_config(file_values, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # Imported here so `--help` stays fast.
    from .checkpoint import CheckpointError
    from .training import (evaluate, run_ablation_no_intervention,
                           run_alpha_sweep, run_training)
    try:
        if args.command == "evaluate":
            result = evaluate(args.checkpoint, args.episodes, args.seed)
            print(f"episodes: {len(result.returns)}")
            print(f"return mean: {result.mean:.6f}")
            print(f"return std: {result.std:.6f}")
            return 0
        cfg = _config_from_args(args)
        if args.command == "ablate":
            records = run_ablation_no_intervention(cfg)
        elif args.command == "sweep" or cfg.ablation == "alpha_sweep":
            rows = run_alpha_sweep(cfg)
            print("rank,alpha,final100_mean")
            for rank, row in enumerate(rows, start=1):
                print(f"{rank},{row['alpha']:g},{row['final100_mean']:.6f}")
            return 0
        else:
            records = run_training(cfg)
        final = records[-1]
        print(f"episodes: {len(records)}")
        print(f"final return: {final.return_mean:.6f}")
        print(f"final trailing100: {final.return_trailing100:.6f}")
        print(f"output dir: {cfg.out}")
        return 0
    except (ConfigError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
