"""
Input validation decorators for polystab.

Provides reusable decorators for validating function inputs such as paths,
positive parameters and non-empty collections.
"""

import inspect
import logging
from functools import wraps
from pathlib import Path
from typing import Any, Callable, Optional, TypeVar

from .exceptions import FileOperationError, ValidationError

logger = logging.getLogger(__name__)

F = TypeVar('F', bound=Callable[..., Any])


def _bound_argument(func: Callable, param_name: str, args: tuple, kwargs: dict) -> Any:
    """Look up a parameter value by name from a call's positional and keyword arguments."""
    if param_name in kwargs:
        return kwargs[param_name]
    try:
        bound = inspect.signature(func).bind_partial(*args, **kwargs)
    except TypeError:
        return None
    return bound.arguments.get(param_name)


def validate_path(
    param_name: str = "path",
    must_exist: bool = False,
    create_parents: bool = False,
) -> Callable[[F], F]:
    """
    Decorator to validate file/directory paths.

    Args:
        param_name: Name of the path parameter to validate
        must_exist: If True, path must already exist
        create_parents: If True, create parent directories if they don't exist

    Raises:
        FileOperationError: If path validation fails

    Example:
        @validate_path("output_file", create_parents=True)
        def save_report(report: dict, output_file: Path) -> None:
            pass
    """
    def decorator(func: F) -> F:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            path_value = _bound_argument(func, param_name, args, kwargs)

            if path_value is not None:
                path_obj = Path(path_value)

                if must_exist and not path_obj.exists():
                    raise FileOperationError(f"Path does not exist: {path_obj}")

                if not path_obj.parent.exists():
                    if not create_parents:
                        raise FileOperationError(
                            f"Parent directory does not exist: {path_obj.parent}"
                        )
                    try:
                        path_obj.parent.mkdir(parents=True, exist_ok=True)
                    except OSError as e:
                        raise FileOperationError(f"Cannot create parent directory: {e}") from e

            return func(*args, **kwargs)

        return wrapper  # type: ignore

    return decorator


def validate_positive(param_name: str, allow_zero: bool = False) -> Callable[[F], F]:
    """
    Decorator to validate that a numeric parameter is positive.

    Args:
        param_name: Name of parameter to validate
        allow_zero: Accept zero as well

    Raises:
        ValidationError: If the value is not positive

    Example:
        @validate_positive("dt")
        def step(state, dt: float) -> None:
            pass
    """
    def decorator(func: F) -> F:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            value = _bound_argument(func, param_name, args, kwargs)

            if value is not None:
                if allow_zero and value < 0:
                    raise ValidationError(f"Parameter '{param_name}' must be >= 0, got {value}.")
                if not allow_zero and not value > 0:
                    raise ValidationError(f"Parameter '{param_name}' must be > 0, got {value}.")

            return func(*args, **kwargs)

        return wrapper  # type: ignore

    return decorator


def validate_range(
    param_name: str,
    minimum: Optional[float] = None,
    maximum: Optional[float] = None,
    error: type = ValidationError,
) -> Callable[[F], F]:
    """
    Decorator to validate that a numeric parameter lies in a closed range.

    Args:
        param_name: Name of parameter to validate
        minimum: Smallest accepted value (None for unbounded)
        maximum: Largest accepted value (None for unbounded)
        error: Exception class raised on failure

    Example:
        @validate_range("degree", 0, 2, error=DegreeUnsupported)
        def moments(mp, degree: int) -> dict:
            pass
    """
    def decorator(func: F) -> F:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            value = _bound_argument(func, param_name, args, kwargs)

            if value is not None:
                if minimum is not None and value < minimum:
                    raise error(f"Parameter '{param_name}' must be >= {minimum}, got {value}.")
                if maximum is not None and value > maximum:
                    raise error(f"Parameter '{param_name}' must be <= {maximum}, got {value}.")

            return func(*args, **kwargs)

        return wrapper  # type: ignore

    return decorator


def validate_not_empty(param_name: str) -> Callable[[F], F]:
    """
    Decorator to validate that a parameter is not empty (list, dict, str, etc).

    Args:
        param_name: Name of parameter to validate

    Raises:
        ValidationError: If parameter is empty

    Example:
        @validate_not_empty("values")
        def sweep(family: str, values: List[str]) -> None:
            pass
    """
    def decorator(func: F) -> F:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            value = _bound_argument(func, param_name, args, kwargs)

            if value is not None and len(value) == 0:
                raise ValidationError(f"Parameter '{param_name}' cannot be empty.")

            return func(*args, **kwargs)

        return wrapper  # type: ignore

    return decorator
