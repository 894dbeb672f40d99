"""
Machine-readable run reports.
"""

import hashlib
import json
import time
from datetime import datetime, timezone
from typing import Any, Dict, Optional

from . import __version__

VOLATILE_KEYS = ("timestamp", "wall_time")


def spec_hash(document: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a polytope document."""
    text = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class RunReport:
    """
    Report of one CLI run.

    Attributes:
        command: Subcommand name
        document: Echo of the polytope document
        seed: Seed used for batteries and restarts
        resolution: Mesh resolution
        sections: Named result sections (scalar summary, verdicts, ...)
    """

    def __init__(
        self,
        command: str,
        document: Optional[Dict[str, Any]],
        seed: int,
        resolution: Optional[int],
    ):
        self.command = command
        self.document = document
        self.seed = seed
        self.resolution = resolution
        self.sections: Dict[str, Any] = {}
        self._start = time.perf_counter()

    def add(self, name: str, value: Any) -> None:
        self.sections[name] = value

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tool": "polystab",
            "version": __version__,
            "command": self.command,
            "input": self.document,
            "spec_hash": spec_hash(self.document) if self.document is not None else None,
            "seed": self.seed,
            "resolution": self.resolution,
            **self.sections,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "wall_time": time.perf_counter() - self._start,
        }


def strip_volatile(report: Dict[str, Any]) -> Dict[str, Any]:
    """Copy of a report dictionary without timestamps and timings."""
    return {k: v for k, v in report.items() if k not in VOLATILE_KEYS}
