"""Command-line entry point.

    carstream run --config exp.yaml [--out DIR] [--jobs K]
    carstream report --traces DIR --out FILE

Exit status: 0 on success, 1 on invalid configuration or arguments,
2 on runtime or I/O failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .exceptions import ValidationError
from .experiment import ReportError, emit_report, load_config, run_experiment

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("carstream")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carstream",
        description="Chunk-Adaptive Restoration experiments on drifting data streams.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run baseline and CAR experiments from a config file")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    run.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    report = sub.add_parser("report", help="summarize a directory of trace CSVs")
    report.add_argument("--traces", required=True, type=Path)
    report.add_argument("--out", required=True, type=Path)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            if args.jobs < 1:
                raise ValidationError("--jobs must be >= 1")
            config = load_config(args.config)
            out = run_experiment(
                config, args.out, jobs=args.jobs, base_dir=args.config.resolve().parent
            )
            print(out)
        else:
            print(emit_report(args.traces, args.out))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ReportError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
