"""
Command-line front end for polystab.
"""

import argparse
import logging
import sys
from typing import List, Optional

from . import __version__
from .commands import AnalyzeCommand, BaseCommand, DecomposeCommand, FlowCommand, SweepCommand
from .commands.base_command import EXIT_ERROR
from .core.error_utils import log_and_report
from .core.exceptions import PolystabError

logger = logging.getLogger(__name__)


def _commands() -> List[BaseCommand]:
    return [AnalyzeCommand(), DecomposeCommand(), FlowCommand(), SweepCommand()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polystab",
        description="Stability analysis of measured toric polytopes",
    )
    parser.add_argument("--version", action="version", version=f"polystab {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in _commands():
        sub = subparsers.add_parser(command.get_command_name(), help=command.get_help())
        command.add_arguments(sub)
        sub.set_defaults(handler=command)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run one subcommand and return its exit code.

    Errors are logged and written to stderr as a single JSON line; the exit
    code is then 1.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    command: BaseCommand = args.handler
    try:
        command.validate_inputs(args)
        return command.run(args)
    except PolystabError as e:
        log_and_report(e, f"polystab {args.command} failed.", stream=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        log_and_report(e, f"polystab {args.command} crashed.", stream=sys.stderr)
        return EXIT_ERROR
