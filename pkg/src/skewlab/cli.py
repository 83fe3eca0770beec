"""Command line entry point.

Verbs:
  run <config.json> [--workers N] [--out DIR]   execute a campaign
  validate <config.json>                        check a config, print problems
  preset <name> --out <dir>                     write a built-in config file

Exit codes: 0 success, 1 one or more runs failed, 2 invalid config or bad
arguments.  SKEWLAB_WORKERS overrides the default worker count when
--workers is absent.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .campaign import run_campaign
from .config import PRESET_NAMES, ConfigError, load_config, preset_dict


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skewlab",
        description="Class-imbalanced semi-supervised learning experiments on 2-D data.")
    sub = parser.add_subparsers(dest="verb", required=True)

    run_p = sub.add_parser("run", help="execute every run in a campaign config")
    run_p.add_argument("config", type=Path, help="path to a campaign JSON file")
    run_p.add_argument("--workers", type=int, default=None,
                       help="process pool size (default: SKEWLAB_WORKERS or 1)")
    run_p.add_argument("--out", type=Path, default=None,
                       help="override the config's output directory")

    val_p = sub.add_parser("validate", help="validate a config and exit")
    val_p.add_argument("config", type=Path)

    pre_p = sub.add_parser("preset", help="write a built-in campaign config")
    pre_p.add_argument("name", choices=list(PRESET_NAMES))
    pre_p.add_argument("--out", type=Path, required=True,
                       help="directory to write <name>.json into")
    return parser


def _load(path: Path):
    try:
        return load_config(str(path))
    except FileNotFoundError:
        print(f"config file not found: {path}", file=sys.stderr)
        return None
    except ConfigError as exc:
        print("config is invalid:", file=sys.stderr)
        for error in exc.errors:
            print(f"  {error}", file=sys.stderr)
        return None


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)

    if args.verb == "validate":
        config = _load(args.config)
        if config is None:
            return 2
        print(f"OK: {config.name} ({len(config.datasets)} datasets x "
              f"{len(config.algorithms)} algorithms x {len(config.seeds)} seeds)")
        return 0

    if args.verb == "preset":
        args.out.mkdir(parents=True, exist_ok=True)
        target = args.out / f"{args.name}.json"
        target.write_text(json.dumps(preset_dict(args.name), indent=2) + "\n",
                          encoding="utf-8")
        print(target)
        return 0

    config = _load(args.config)
    if config is None:
        return 2
    outcome = run_campaign(config, workers=args.workers, out_dir=args.out)
    n_runs = len(config.datasets) * len(config.algorithms) * len(config.seeds)
    n_failed = len(outcome.failures)
    print(f"{config.name}: {n_runs - n_failed}/{n_runs} runs succeeded; "
          f"outputs in {outcome.out_dir}")
    if outcome.failures:
        for run_id in sorted(outcome.failures):
            print(f"  failed: {run_id}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
