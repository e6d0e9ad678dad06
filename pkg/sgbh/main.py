"""
SGBH toolkit - command-line application
Main entry point with all subcommands configured.
"""
import argparse
from typing import List, Optional

from sgbh.config import settings
from sgbh.core.logging import setup_logging

# Import all subcommands
from sgbh.commands import history, presets, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgbh",
        description="Simulation and analysis of the stochastic generalized Burgers-Huxley equation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    parser.add_argument("--log-level", default=None, help="overrides SGBH_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register all subcommands
    run.register(subparsers)
    presets.register(subparsers)
    history.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    return args.handler(args)
