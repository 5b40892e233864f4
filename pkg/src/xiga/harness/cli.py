"""Command-line front end: ``xiga run|validate|list-studies``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from ..errors import ConfigError, GeometryResolutionError, XigaError
from .config import apply_override, dump_yaml, load_yaml, validate
from .report import emit_report
from .studies import list_studies, make_config, run_study

THREADS_ENV = "XIGA_THREADS"


def _load(path: str, overrides: list[str]):
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    data = load_yaml(text)
    for item in overrides:
        apply_override(data, item)
    return make_config(data)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xiga", description="Immersed THB studies.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress per step")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a study")
    run.add_argument("config", help="YAML study config ('-' for stdin)")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key, e.g. fields.u.degree=3")
    run.add_argument("--out", help="output directory (overrides output.dir)")
    val = sub.add_parser("validate", help="check a config and print the merged result")
    val.add_argument("config")
    val.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    sub.add_parser("list-studies", help="list built-in studies")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "list-studies":
        for name, desc in list_studies():
            print(f"{name:20s} {desc}")
        return 0
    try:
        cfg = _load(args.config, args.overrides)
        if args.command == "validate":
            errs = validate(cfg)
            if errs:
                print("invalid config:", *errs, sep="\n  ", file=sys.stderr)
                return 2
            print(dump_yaml(cfg), end="")
            return 0
        threads = os.environ.get(THREADS_ENV)
        with threadpool_limits(limits=int(threads) if threads else None):
            report = run_study(cfg)
        out = args.out or cfg.output.dir
        paths = emit_report(report, out, cfg.output.timings, cfg.output.export_fields)
    except GeometryResolutionError as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except XigaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for key, path in paths.items():
        print(f"{key}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
