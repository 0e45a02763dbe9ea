#!/usr/bin/env python3
"""
Command line entry point

    python cli.py simulate --config run.cfg --out runs/cos
    python cli.py probe kernel --profile quick
    python cli.py verify --set grid.n=128 --seed 7
    python cli.py serve

Exit codes: 0 success, 1 a probe failed, 2 invalid configuration,
3 numerical failure.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from experiment_runner import EXIT_CONFIG, EXIT_NUMERICAL, RunSummary, run_workflow
from field_io import SnapshotFormatError
from mild_solver import SolverDivergenceError
from run_config import ConfigError, RunConfigPanel
from spectral_core import FieldValidationError

logger = logging.getLogger(__name__)

WORKFLOWS = ("simulate", "picard", "probe", "verify", "calibrate-mu0", "serve")


def configure_logging(level: Optional[str] = None) -> None:
    name = (level or os.getenv("QG_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat section.key = value file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="seed of the random initial data")
    common.add_argument("--deterministic", type=_parse_bool, help="pin FFTs to one thread (default true)")
    common.add_argument("--profile", help="named starting profile (default, quick, acceptance)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key; repeatable")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")

    parser = argparse.ArgumentParser(description="Mild-solution solver and verification runs for dissipative QG")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("simulate", parents=[common], help="evolve the initial data with the ETD stepper")
    commands.add_parser("picard", parents=[common], help="run the Picard iteration on the time grid")
    probe = commands.add_parser("probe", parents=[common], help="run a single probe")
    probe.add_argument("name", help="probe name")
    commands.add_parser("verify", parents=[common], help="run the selected probes")
    commands.add_parser("calibrate-mu0", parents=[common], help="measure the smallness threshold")
    serve = commands.add_parser("serve", parents=[common], help="start the HTTP service")
    serve.add_argument("--host", default=os.getenv("HOST", "0.0.0.0"))
    serve.add_argument("--port", type=int, default=int(os.getenv("PORT", "8000")))
    return parser


def resolve_config(args: argparse.Namespace):
    panel = RunConfigPanel(args.profile)
    if args.config:
        panel.apply_file(args.config)
    panel.apply_overrides(args.overrides)
    if args.seed is not None:
        panel.adjust("initial.seed", args.seed)
    if args.deterministic is not None:
        panel.adjust("run.deterministic", args.deterministic)
    if args.out:
        panel.adjust("output.dir", args.out)
    panel.show_current_settings()
    return panel.resolve()


def print_summary(summary: RunSummary) -> None:
    print(f"\n📊 {summary.workflow}: {summary.status}")
    for key, value in summary.values.items():
        print(f"   {key}: {value}")
    for report in summary.reports:
        status = "skipped" if report.skipped else ("pass" if report.passed else "FAIL")
        measured = "" if report.measured is None else f"measured={report.measured:.6g}"
        expected = "" if report.expected is None else f"expected={report.expected:.6g}"
        print(f"   [{status:>7}] {report.name} {measured} {expected}".rstrip())
    for artifact in summary.artifacts:
        print(f"   📁 {artifact}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    try:
        config = resolve_config(args)
    except ConfigError as e:
        print(f"❌ Invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "serve":
        import uvicorn

        uvicorn.run("main:app", host=args.host, port=args.port)
        return 0

    try:
        summary = run_workflow(config, args.command, probe_name=getattr(args, "name", None))
    except SolverDivergenceError as e:
        print(f"❌ Numerical failure in {e.stage} at step {e.step}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, FieldValidationError, SnapshotFormatError, ValueError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_CONFIG

    print_summary(summary)
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
