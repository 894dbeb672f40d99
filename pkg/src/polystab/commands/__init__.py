"""
Subcommands of the polystab command line.

Each subcommand is a BaseCommand registered with the argument parser.
"""

from .base_command import BaseCommand
from .analyze import AnalyzeCommand, cmd_analyze
from .decompose import DecomposeCommand, cmd_decompose
from .flow import FlowCommand, cmd_flow
from .sweep import SweepCommand, cmd_sweep

__all__ = [
    "BaseCommand",
    "AnalyzeCommand",
    "DecomposeCommand",
    "FlowCommand",
    "SweepCommand",
    "cmd_analyze",
    "cmd_decompose",
    "cmd_flow",
    "cmd_sweep",
]
