"""Command-line front end.

    afdmsim <experiment> [--config FILE] [--seed S] [--trials N] [--out CSV]
                         [--threads T] [--print-defaults] [--check]

Exit codes: 0 success, 2 configuration error, 3 failed check (with --check).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import harness
from .spreading import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="afdmsim", description="Chirp-multicarrier anti-interference link experiments.")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in harness.EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON file overriding the experiment defaults")
        sp.add_argument("--seed", type=int, help="root seed (unsigned 64-bit)")
        sp.add_argument("--trials", type=int, help="Monte Carlo count per point")
        sp.add_argument("--out", type=Path, help="CSV destination (default: stdout)")
        sp.add_argument("--threads", type=int, help="worker threads")
        sp.add_argument("--print-defaults", action="store_true", help="print the default config as JSON and exit")
        sp.add_argument("--check", action="store_true", help="exit with status 3 if any acceptance check fails")
    return ap


def _load(args: argparse.Namespace) -> harness.ExperimentConfig:
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as e:
            raise ConfigError(f"{args.config}: {e.strerror}") from e
        try:
            cfg = harness.config_from_json(text, args.experiment)
        except ConfigError as e:
            raise ConfigError(f"{args.config}: {e}") from e
    else:
        cfg = harness.default_config(args.experiment)
    overrides = {k: getattr(args, k) for k in ("seed", "trials", "threads") if getattr(args, k) is not None}
    if overrides:
        try:
            cfg = dataclasses.replace(cfg, **overrides)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.print_defaults:
        d = harness.default_config(args.experiment).to_dict()
        d["reference_system"] = harness.TABLE_II
        print(json.dumps(d, indent=2))
        return EXIT_OK
    try:
        cfg = _load(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    result = harness.run(cfg)
    text = result.csv()
    if args.out is not None:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    if args.check:
        failed = [k for k, ok in result.checks.items() if not ok]
        for k in result.checks:
            print(f"{'FAIL' if k in failed else 'PASS'} {k}", file=sys.stderr)
        if failed:
            return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
