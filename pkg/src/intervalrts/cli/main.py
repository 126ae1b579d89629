"""Command line entry point: ``intervalrts run|validate|gallery``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..maps.gallery import describe_gallery
from .config import ConfigError, load_config
from .runner import EXIT_ERROR, EXIT_PASS, run


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="intervalrts", description="Return-time statistics for interval maps.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute an experiment config")
    r.add_argument("config", type=Path)
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    r.add_argument("--strict-repro", action="store_true", help="byte-identical outputs (omits wall-clock)")
    r.add_argument("--out", type=Path, default=None, help="output directory")

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config", type=Path)
    v.add_argument("--seed", type=int, default=None)

    sub.add_parser("gallery", help="list built-in maps and their analytic oracles")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")

    if args.command == "gallery":
        for row in describe_gallery():
            print(json.dumps(row))
        return EXIT_PASS

    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        for m in exc.messages:
            print(f"{args.config}: {m}", file=sys.stderr)
        return EXIT_ERROR

    if args.command == "validate":
        print("ok")
        print(json.dumps(cfg.echo(), indent=2, sort_keys=True))
        return EXIT_PASS

    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    report = run(cfg, args.out, args.threads, args.strict_repro)
    print(f"{cfg.kind}: {report.status}")
    for w in report.warnings:
        print(f"  warning: {w}")
    if "error" in report.results:
        print(f"  error: {report.results['error']}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
