"""
Base class for polystab subcommands.
"""

import argparse
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Optional, Union

from ..core.config_manager import get_config_manager
from ..geometry import MeasuredPolytope, parse_polytope
from ..resources import example_path, list_examples

logger = logging.getLogger(__name__)

EXIT_STABLE = 0
EXIT_SEMISTABLE = 10
EXIT_UNSTABLE = 20
EXIT_ERROR = 1


def load_spec(spec: Union[str, Path]) -> MeasuredPolytope:
    """Parse a polytope document from a path or a bundled example name."""
    path = Path(spec)
    if not path.exists() and str(spec) in list_examples():
        path = example_path(str(spec))
        logger.info(f"Using bundled example {spec}")
    return parse_polytope(path)


def output_dir(out: Optional[Union[str, Path]]) -> Path:
    path = Path(out) if out is not None else Path.cwd()
    path.mkdir(parents=True, exist_ok=True)
    return path


class BaseCommand(ABC):
    """
    Abstract base class for subcommands.

    Each subcommand registers its own arguments and returns a process exit
    code from ``run``.
    """

    def __init__(self) -> None:
        self.config = get_config_manager()

    @abstractmethod
    def get_command_name(self) -> str:
        """Return the subcommand name."""
        pass

    @abstractmethod
    def get_help(self) -> str:
        """Return the one-line help text."""
        pass

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """Register the arguments shared by every subcommand, then the command's own."""
        parser.add_argument("--resolution", type=int, default=None, help="Mesh resolution")
        parser.add_argument(
            "--seed", type=int, default=self.config.get("cli/seed", 42), help="Random seed"
        )
        parser.add_argument("--out", default=None, help="Output directory (default: current)")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser: argparse.ArgumentParser) -> None:
        """Override to register command-specific arguments."""
        pass

    def validate_inputs(self, args: argparse.Namespace) -> None:
        """Override to reject invalid argument combinations (raise ValidationError)."""
        pass

    @abstractmethod
    def run(self, args: argparse.Namespace) -> int:
        """Execute the command and return the exit code."""
        pass
