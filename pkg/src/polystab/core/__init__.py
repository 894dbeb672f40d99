"""
Core functionality for polystab.
"""

from .config_manager import ConfigManager, get_config_manager
from .exceptions import (
    PolystabError,
    ValidationError,
    ConfigError,
    FileOperationError,
    ExportError,
    GeometryError,
    EvaluationError,
    SolverError,
    DecompositionError,
    FlowError,
)
from .error_utils import error_payload, log_and_report, safe_operation

__all__ = [
    "ConfigManager",
    "get_config_manager",
    "PolystabError",
    "ValidationError",
    "ConfigError",
    "FileOperationError",
    "ExportError",
    "GeometryError",
    "EvaluationError",
    "SolverError",
    "DecompositionError",
    "FlowError",
    "error_payload",
    "log_and_report",
    "safe_operation",
]
