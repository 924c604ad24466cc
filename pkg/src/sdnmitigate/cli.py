"""Command line: ``sdnmitigate run SCENARIO [--out DIR] [--protection on|off] [--seed N] [--quiet]``.

Exit codes: 0 success, 1 I/O error, 2 scenario parse error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys

from .engine import SchedulingError
from .runner import InvariantViolation, emit_report, run_scenario
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_IO = 1
EXIT_PARSE = 2
EXIT_INVARIANT = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdnmitigate",
                                     description="Simulate DDoS attacks and in-network mitigation.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario file")
    run.add_argument("scenario", help="scenario document")
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.add_argument("--protection", choices=("on", "off"), help="override protection")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--quiet", action="store_true", help="print nothing on success")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"cannot read {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_IO
    protection = None if args.protection is None else args.protection == "on"
    cfg = cfg.with_overrides(protection=protection, seed=args.seed)
    try:
        report = run_scenario(cfg)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        print(json.dumps(exc.state, indent=2, sort_keys=True), file=sys.stderr)
        return EXIT_INVARIANT
    except SchedulingError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    try:
        files = emit_report(report, args.out)
    except OSError as exc:
        print(f"cannot write report to {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        print(json.dumps(report.summary, indent=2, sort_keys=True))
        for path in files:
            print(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
