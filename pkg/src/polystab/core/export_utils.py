"""Report export utilities for the formats polystab writes.

This module provides functions to write run artifacts atomically:
- JSON reports (.json)
- CSV tables through pandas (.csv)
- SVG line charts through matplotlib (.svg)

Every writer stages its output in a temporary file next to the target and
moves it into place with ``os.replace``.
"""

import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .exceptions import ExportError
from .validation import validate_path

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@contextmanager
def atomic_target(output_path: PathLike, suffix: str = "") -> Iterator[Path]:
    """Yield a temporary path that replaces ``output_path`` on success.

    Args:
        output_path: Final destination
        suffix: Suffix for the temporary file (some writers infer format from it)
    """
    target = Path(output_path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=suffix, dir=target.parent)
    os.close(fd)
    tmp = Path(tmp_name)
    try:
        yield tmp
        os.replace(tmp, target)
    finally:
        if tmp.exists():
            tmp.unlink()


def _builtin(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


@validate_path("output_path", create_parents=True)
def export_to_json(data: Dict[str, Any], output_path: PathLike) -> str:
    """Export a report dictionary to a JSON file.

    Keys are sorted and floats are written with ``repr`` precision, so equal
    inputs give byte-identical files.

    Args:
        data: JSON-serializable dictionary
        output_path: Output file path

    Returns:
        Path to exported file

    Raises:
        ExportError: If export fails
    """
    try:
        with atomic_target(output_path, ".json") as tmp:
            with open(tmp, "w", encoding="utf-8") as f:
                json.dump(data, f, indent=2, sort_keys=True, allow_nan=True, default=_builtin)
                f.write("\n")
        return str(output_path)
    except (OSError, TypeError, ValueError) as e:
        logger.error(f"Failed to export JSON to {output_path}: {str(e)}")
        raise ExportError(f"Failed to export JSON to {output_path}: {str(e)}") from e


@validate_path("output_path", create_parents=True)
def export_to_csv(table: Union[pd.DataFrame, Dict[str, Sequence]], output_path: PathLike) -> str:
    """Export a table to CSV.

    Args:
        table: DataFrame or mapping of column name to values
        output_path: Output file path

    Returns:
        Path to exported file

    Raises:
        ExportError: If export fails
    """
    try:
        frame = table if isinstance(table, pd.DataFrame) else pd.DataFrame(table)
        with atomic_target(output_path, ".csv") as tmp:
            frame.to_csv(tmp, index=False, float_format="%.17g")
        return str(output_path)
    except (OSError, ValueError) as e:
        logger.error(f"Failed to export CSV to {output_path}: {str(e)}")
        raise ExportError(f"Failed to export CSV to {output_path}: {str(e)}") from e


@validate_path("output_path", create_parents=True)
def export_line_chart_svg(
    table: pd.DataFrame,
    x_column: str,
    y_columns: List[str],
    output_path: PathLike,
    title: Optional[str] = None,
    log_y: bool = False,
) -> str:
    """Export one SVG line chart with a subplot per column.

    Args:
        table: Source data
        x_column: Column for the horizontal axis
        y_columns: Columns to plot
        output_path: Output file path (.svg)
        title: Figure title
        log_y: Use a logarithmic vertical axis where values are positive

    Returns:
        Path to exported file

    Raises:
        ExportError: If export fails
    """
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, axes = plt.subplots(len(y_columns), 1, figsize=(7, 2.2 * len(y_columns)), sharex=True)
        try:
            if len(y_columns) == 1:
                axes = [axes]
            for ax, column in zip(axes, y_columns):
                ax.plot(table[x_column], table[column], linewidth=1.2)
                ax.set_ylabel(column)
                if log_y and (table[column] > 0).all():
                    ax.set_yscale("log")
                ax.grid(True, alpha=0.3)
            axes[-1].set_xlabel(x_column)
            if title:
                fig.suptitle(title)
            fig.tight_layout()
            with atomic_target(output_path, ".svg") as tmp:
                fig.savefig(tmp, format="svg")
        finally:
            plt.close(fig)
        return str(output_path)
    except (OSError, KeyError, ValueError) as e:
        logger.error(f"Failed to export SVG chart to {output_path}: {str(e)}")
        raise ExportError(f"Failed to export SVG chart to {output_path}: {str(e)}") from e
