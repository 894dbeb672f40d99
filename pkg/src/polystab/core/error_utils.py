"""
Error handling utilities for polystab.

Provides centralized error logging, structured error payloads for machine
consumers, and a guarded call helper for batch runs.
"""

import json
import logging
import sys
from typing import Any, Callable, Dict, Optional, TextIO, TypeVar

from .exceptions import PolystabError

logger = logging.getLogger(__name__)

T = TypeVar("T")


def error_payload(error: BaseException) -> Dict[str, Any]:
    """
    Build a JSON-serializable description of an exception.

    Args:
        error: The exception to describe

    Returns:
        Dictionary with the exception class name, message and details

    Example:
        >>> error_payload(ValidationError("bad resolution"))
        {'error': 'ValidationError', 'message': 'bad resolution', 'details': {}}
    """
    details: Dict[str, Any] = {}
    if isinstance(error, PolystabError):
        details = {k: _jsonable(v) for k, v in error.details.items()}
    return {
        "error": type(error).__name__,
        "message": str(error),
        "details": details,
    }


def _jsonable(value: Any) -> Any:
    try:
        json.dumps(value)
        return value
    except (TypeError, ValueError):
        return repr(value)


def log_and_report(
    error: BaseException,
    user_message: str,
    stream: Optional[TextIO] = None,
    log_level: int = logging.ERROR,
) -> Dict[str, Any]:
    """
    Log an exception and write its structured payload as one JSON line.

    Args:
        error: The exception that occurred
        user_message: Human readable context for the log record
        stream: Where to write the JSON line (default: stderr)
        log_level: Logging level for the log record

    Returns:
        The payload that was written
    """
    logger.log(
        log_level,
        f"{user_message} Error: {str(error)}",
        exc_info=log_level >= logging.ERROR and not isinstance(error, PolystabError),
    )
    payload = error_payload(error)
    out = stream if stream is not None else sys.stderr
    out.write(json.dumps(payload, sort_keys=True) + "\n")
    out.flush()
    return payload


def safe_operation(
    operation: Callable[[], T],
    error_message: str,
    default_return: Any = None,
    on_error: Optional[Callable[[BaseException], None]] = None,
) -> Any:
    """
    Execute an operation with automatic error handling.

    Args:
        operation: Callable to execute
        error_message: Message to log on error
        default_return: Value to return on exception
        on_error: Optional callback receiving the exception

    Returns:
        Result of operation, or default_return on exception

    Example:
        report = safe_operation(
            lambda: analyze(mp),
            "Sweep item failed",
            on_error=failures.append,
        )
    """
    try:
        return operation()
    except Exception as e:
        logger.warning(f"{error_message} Error: {str(e)}")
        if on_error is not None:
            on_error(e)
        return default_return
