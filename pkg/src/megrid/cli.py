"""Command line entry point.

One subcommand per pipeline stage plus ``pipeline`` to chain them.  All
subcommands read a JSON config, write their artifacts into the output
directory and exit 0; config problems exit 2 and module errors exit 1, with
the error class named on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .errors import PlanningError
from .pipeline import ConfigInvalid

COMMANDS = ("cadaster", "cells", "forecast", "synth", "flow", "place", "flex", "pipeline")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="megrid", description="Multi-energy grid planning toolkit."
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config file")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument(
        "--seed", type=int, default=None, help="override the config's random seed"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name, parents=[common])
        if name in ("flow", "pipeline"):
            sub.add_argument(
                "--method",
                choices=("newton", "sequential"),
                default=None,
                help="override the flow solver method",
            )
    return parser


def load_config(path_text: str) -> tuple[dict, Path]:
    path = Path(path_text)
    if not path.exists():
        raise ConfigInvalid(f"config file not found: {path}")
    try:
        tree = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {path}: {exc}") from exc
    if not isinstance(tree, dict):
        raise ConfigInvalid(f"config root must be an object: {path}")
    return tree, path.resolve().parent


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, base_dir = load_config(args.config)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        seed = args.seed
        method = getattr(args, "method", None)
        if args.command == "cadaster":
            pipeline.run_cadaster(config, base_dir, out_dir)
        elif args.command == "cells":
            pipeline.run_cells(config, base_dir, out_dir)
        elif args.command == "forecast":
            pipeline.run_forecast(config, base_dir, out_dir, seed=seed)
        elif args.command == "synth":
            pipeline.run_synth(config, base_dir, out_dir)
        elif args.command == "flow":
            pipeline.run_flow(config, base_dir, out_dir, method_override=method)
        elif args.command == "place":
            pipeline.run_place(config, base_dir, out_dir, seed=seed)
        elif args.command == "flex":
            pipeline.run_flex(config, base_dir, out_dir)
        else:
            pipeline.run_pipeline(
                config, base_dir, out_dir, seed=seed, method_override=method
            )
    except ConfigInvalid as exc:
        print(f"ConfigInvalid: {exc}", file=sys.stderr)
        return 2
    except PlanningError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
