"""
Main application entry point for polystab.
"""

import logging
import os
import sys
from typing import List, Optional

from .core.config_manager import get_config_manager

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _resolve_level(value: str) -> int:
    value = value.strip()
    if value.isdigit():
        return int(value)
    level = logging.getLevelName(value.upper())
    return level if isinstance(level, int) else logging.WARNING


def setup_logging() -> None:
    """Configure logging on stderr from POLYSTAB_LOG, then config logging/level."""
    config = get_config_manager()
    raw = os.environ.get("POLYSTAB_LOG") or str(config.get("logging/level", "WARNING"))
    logging.basicConfig(level=_resolve_level(raw), format=LOG_FORMAT, stream=sys.stderr)


def run_app(argv: Optional[List[str]] = None) -> None:
    """Initialize logging and run the polystab command line."""
    from .cli import main

    setup_logging()
    sys.exit(main(argv))


if __name__ == "__main__":
    run_app()
