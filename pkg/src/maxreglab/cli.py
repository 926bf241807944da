"""Command-line runner: ``maxreglab <command> --config <path> [--out DIR] [--seed N] [--format F]``.

Exit status is 0 when every verdict passes, 1 when any fails and 2 for
usage or configuration errors.  Warnings never change the exit status.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .checks import COMMANDS, run
from .config import ConfigError, load_config
from .report import emit, to_text

FORMATS = ("json", "csv", "text")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maxreglab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", help="flat YAML config file (omit for defaults)")
    p.add_argument("--out", help="output directory (default: config 'output')")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--format", choices=FORMATS, action="append",
                   help="output format; repeatable (default: all three)")
    p.add_argument("--quiet", action="store_true", help="do not print the text summary")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed)
    except ConfigError as exc:
        print(f"maxreglab: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"maxreglab: cannot read config: {exc}", file=sys.stderr)
        return 2
    report = run(args.command, cfg)
    out = args.out or cfg.output
    try:
        emit(report, out, tuple(args.format or FORMATS))
    except OSError as exc:
        print(f"maxreglab: cannot write to {out}: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        sys.stdout.write(to_text(report))
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
