"""
The ``sweep`` subcommand: analyze every member of a parameter family.
"""

import argparse
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from ..core.error_utils import error_payload, safe_operation
from ..core.export_utils import export_to_json
from ..core.validation import validate_not_empty
from ..families import get_family
from ..report import RunReport
from .analyze import analyze_polytope
from .base_command import EXIT_ERROR, BaseCommand, output_dir

logger = logging.getLogger(__name__)


def _safe_label(value: str) -> str:
    return value.replace("/", "_").replace(".", "p").replace("-", "m")


def sweep_item(
    family_name: str,
    value: str,
    out: str,
    resolution: Optional[int],
    seed: int,
) -> Dict[str, Any]:
    """Analyze one family member in every mode of the family; never raises."""
    family = get_family(family_name)
    folder = Path(out) / f"{family_name}_{_safe_label(value)}"
    failures: List[BaseException] = []

    def analyze() -> Dict[str, Any]:
        mp = family.build(value)
        report = RunReport("sweep", mp.to_document(), seed, resolution or mp.resolution)
        report.add("family", family_name)
        report.add(family.parameter, value)
        verdicts = {}
        codes = {}
        for mode in family.modes:
            result, sections = analyze_polytope(mp, resolution, seed, mode)
            report.add(mode, sections)
            verdicts[mode] = result.verdict.value
            codes[mode] = sections["exit_code"]
        folder.mkdir(parents=True, exist_ok=True)
        export_to_json(report.to_dict(), folder / "report.json")
        return {"value": value, "verdicts": verdicts, "exit_codes": codes, "report": str(folder / "report.json")}

    entry = safe_operation(
        analyze, f"Sweep item {family_name} = {value} failed.", on_error=failures.append
    )
    if entry is None:
        error = error_payload(failures[0]) if failures else {"error": "Unknown", "message": "", "details": {}}
        entry = {"value": value, "verdicts": None, "exit_codes": {"error": EXIT_ERROR}, "error": error}
    return entry


@validate_not_empty("values")
def cmd_sweep(
    family: str,
    values: Sequence[str],
    out: Optional[Union[str, Path]] = None,
    jobs: int = 1,
    resolution: Optional[int] = None,
    seed: int = 42,
) -> Dict[str, Any]:
    """
    Analyze each family member and write one report per member plus index.json.

    Per-item failures are recorded in the index and the sweep continues.
    Items run in up to ``jobs`` worker processes; the index keeps input order.

    Returns:
        The index dictionary
    """
    fam = get_family(family)
    folder = output_dir(out)
    args = [(family, str(v), str(folder), resolution, seed) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(sweep_item, *zip(*args)))
    else:
        entries = [sweep_item(*a) for a in args]
    index = {
        "family": family,
        "parameter": fam.parameter,
        "modes": fam.modes,
        "seed": seed,
        "resolution": resolution,
        "items": entries,
        "failures": sum(1 for e in entries if "error" in e),
    }
    export_to_json(index, folder / "index.json")
    logger.info(f"Sweep {family}: {len(entries)} items, {index['failures']} failures")
    return index


class SweepCommand(BaseCommand):
    """Verdict table over a parameter family."""

    def get_command_name(self) -> str:
        return "sweep"

    def get_help(self) -> str:
        return "Analyze a parameter family (trapezium, interval, long_thin)"

    def add_command_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("family", help="Family name")
        parser.add_argument("values", nargs="+", help="Parameter values (rationals like 1/2 allowed)")
        parser.add_argument(
            "--jobs", type=int, default=self.config.get("cli/jobs", 1), help="Worker processes"
        )

    def run(self, args: argparse.Namespace) -> int:
        index = cmd_sweep(args.family, args.values, args.out, args.jobs, args.resolution, args.seed)
        return EXIT_ERROR if index["failures"] == len(index["items"]) else 0
