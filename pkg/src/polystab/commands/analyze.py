"""
The ``analyze`` subcommand: stability verdict, extremal function and S-hat.
"""

import argparse
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import pandas as pd

from ..core.export_utils import export_to_csv, export_to_json
from ..destabilizer import (
    DestabilizerResult,
    SolverOptions,
    Verdict,
    semistability_test,
    solve_optimal_destabilizer,
)
from ..functionals import extremal_affine
from ..geometry import MeasuredPolytope, scalar_summary
from ..quadrature import build_quadrature
from ..report import RunReport
from .base_command import (
    EXIT_SEMISTABLE,
    EXIT_STABLE,
    EXIT_UNSTABLE,
    BaseCommand,
    load_spec,
    output_dir,
)

logger = logging.getLogger(__name__)

EXIT_CODES = {
    Verdict.STABLE: EXIT_STABLE,
    Verdict.SEMISTABLE_STRICT: EXIT_SEMISTABLE,
    Verdict.UNSTABLE: EXIT_UNSTABLE,
}


def analyze_polytope(
    mp: MeasuredPolytope,
    resolution: Optional[int] = None,
    seed: int = 42,
    density: Optional[str] = None,
    battery: Optional[int] = None,
) -> Tuple[DestabilizerResult, Dict[str, Any]]:
    """
    Run the destabilizer in the requested density mode.

    Returns:
        (result, report sections)
    """
    mode = density or mp.density_mode
    quad = build_quadrature(mp, resolution)
    opts = SolverOptions.from_config(seed=seed, battery_size=battery)
    if mode == "extremal":
        _, _, result = semistability_test(mp, quad, opts)
    else:
        result = solve_optimal_destabilizer(mp, quad, opts)
    summary = scalar_summary(mp)
    sections = {
        "density_mode": mode,
        "scalar_summary": summary.to_dict(),
        "extremal_affine": extremal_affine(mp).to_dict(),
        "verdict": result.verdict.value,
        "exit_code": EXIT_CODES[result.verdict],
        "destabilizer": result.to_dict(),
        "quadrature": quad.to_dict(),
        "battery_size": opts.battery_size,
    }
    return result, sections


def phi_frame(result: DestabilizerResult) -> pd.DataFrame:
    frame = result.phi.to_frame()
    frame["B"] = result.b_density
    return frame


def cmd_analyze(
    spec: Union[str, Path],
    resolution: Optional[int] = None,
    seed: int = 42,
    out: Optional[Union[str, Path]] = None,
    density: Optional[str] = None,
    battery: Optional[int] = None,
) -> Tuple[RunReport, int]:
    """
    Analyze one polytope document and write report.json and phi.csv.

    Returns:
        (RunReport, exit code): 0 stable, 10 strictly semistable, 20 unstable
    """
    mp = load_spec(spec)
    result, sections = analyze_polytope(mp, resolution, seed, density, battery)
    report = RunReport("analyze", mp.to_document(), seed, resolution or mp.resolution)
    for name, value in sections.items():
        report.add(name, value)
    folder = output_dir(out)
    export_to_json(report.to_dict(), folder / "report.json")
    export_to_csv(phi_frame(result), folder / "phi.csv")
    code = EXIT_CODES[result.verdict]
    logger.info(f"analyze {mp.name or spec}: {result.verdict.value} (exit {code})")
    return report, code


class AnalyzeCommand(BaseCommand):
    """Stability verdict for one polytope."""

    def get_command_name(self) -> str:
        return "analyze"

    def get_help(self) -> str:
        return "Compute S-hat, the extremal function and the stability verdict"

    def add_command_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("spec", help="Polytope JSON file or bundled example name")
        parser.add_argument(
            "--density", choices=["constant", "extremal"], default=None,
            help="Reference density (default: from the document)",
        )
        parser.add_argument("--battery", type=int, default=None, help="Certificate battery size")

    def run(self, args: argparse.Namespace) -> int:
        _, code = cmd_analyze(args.spec, args.resolution, args.seed, args.out, args.density, args.battery)
        return code
