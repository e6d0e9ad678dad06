"""
Run and validate commands - execute or check an experiment config.
"""
import argparse
import logging
import sys

from sgbh.core.exceptions import SGBHException
from sgbh.services.experiment_service import run_experiment, validate_config

logger = logging.getLogger(__name__)


def run_command(args: argparse.Namespace) -> int:
    """Run the experiment; the exit status is the manifest's."""
    record = False if args.no_record else None
    manifest = run_experiment(args.config, record=record)
    print(f"{manifest.experiment}: {manifest.status} (exit {manifest.exit_code})")
    for name, ok in manifest.checks.items():
        print(f"  {name}: {'pass' if ok else 'FAIL'}")
    if manifest.message:
        print(manifest.message, file=sys.stderr)
    return manifest.exit_code


def validate_command(args: argparse.Namespace) -> int:
    try:
        config = validate_config(args.config)
    except SGBHException as e:
        print(e.message, file=sys.stderr)
        return e.exit_code
    print(f"OK: {config.experiment.kind} experiment, scheme {config.scheme.name}, "
          f"m={config.grid.m}, N={config.grid.N}, {config.seeds.count} seed(s)")
    return 0


def register(subparsers) -> None:
    run = subparsers.add_parser("run", help="execute the experiment in a TOML config")
    run.add_argument("config", help="path to the run config")
    run.add_argument("--no-record", action="store_true", help="skip the run catalogue")
    run.set_defaults(handler=run_command)

    validate = subparsers.add_parser("validate", help="parse and resolve a config without running it")
    validate.add_argument("config", help="path to the run config")
    validate.set_defaults(handler=validate_command)
