"""
The ``flow`` subcommand: Calabi flow on a weighted interval.
"""

import argparse
import logging
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np
import sympy as sp

from ..calabiflow import FlowDiagnostics, FlowOptions, coercivity_estimate, init_potential, run_flow
from ..core.exceptions import ValidationError
from ..core.export_utils import export_line_chart_svg, export_to_csv, export_to_json
from ..geometry import scalar_summary
from ..report import RunReport
from .base_command import BaseCommand, load_spec, output_dir

logger = logging.getLogger(__name__)


def parse_perturbation(text: Optional[str]) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """
    Turn an expression in x such as ``0.5*x*(1-x)`` into a vectorised callable.

    Raises:
        ValidationError: If the expression does not parse or uses other symbols
    """
    if text is None or not text.strip():
        return None
    x = sp.Symbol("x")
    try:
        expr = sp.sympify(text, locals={"x": x})
    except (sp.SympifyError, SyntaxError, TypeError) as e:
        raise ValidationError(f"Cannot parse perturbation {text!r}: {e}") from e
    extra = expr.free_symbols - {x}
    if extra:
        raise ValidationError(f"Perturbation may only use x, found {sorted(map(str, extra))}")
    fn = sp.lambdify(x, expr, "numpy")
    return lambda nodes: np.broadcast_to(np.asarray(fn(nodes), dtype=float), nodes.shape)


def cmd_flow(
    spec: Union[str, Path],
    t_end: float,
    perturb: Optional[str] = None,
    plot: bool = False,
    resolution: Optional[int] = None,
    out: Optional[Union[str, Path]] = None,
    seed: int = 42,
) -> Tuple[RunReport, FlowDiagnostics]:
    """
    Run the Calabi flow and write diagnostics.csv, flow.json and optional SVG charts.

    Raises:
        ZeroWeightEndpoint: If an endpoint weight is 0
        NonConvexStart: If the perturbed potential is not convex
    """
    if t_end <= 0:
        raise ValidationError(f"--t-end must be positive, got {t_end}")
    mp = load_spec(spec)
    opts = FlowOptions.from_config(resolution=resolution)
    state0 = init_potential(mp, parse_perturbation(perturb), opts.resolution, opts.grading)
    lam = coercivity_estimate(init_potential(mp, None, opts.resolution, opts.grading), seed=seed)
    diagnostics, final = run_flow(state0, t_end, opts=opts)
    diagnostics.summary["coercivity_estimate"] = lam
    if not lam > 0:
        logger.warning(f"Coercivity estimate {lam:.3g} is not positive")

    report = RunReport("flow", mp.to_document(), seed, opts.resolution)
    report.add("scalar_summary", scalar_summary(mp).to_dict())
    report.add("perturbation", perturb)
    report.add("t_end", t_end)
    report.add("flow", diagnostics.to_dict())

    folder = output_dir(out)
    frame = diagnostics.frame
    export_to_csv(frame, folder / "diagnostics.csv")
    export_to_csv(final.to_frame(), folder / "final_state.csv")
    export_to_json(report.to_dict(), folder / "flow.json")
    if plot:
        export_line_chart_svg(
            frame, "t", ["calabi_energy", "target_residual"], folder / "energy.svg",
            title=f"Calabi flow on {mp.name or 'interval'}", log_y=True,
        )
        export_line_chart_svg(
            frame, "t", ["F_Shat", "F_B", "L_Sv0", "boundary_integral"], folder / "functionals.svg",
        )
    return report, diagnostics


class FlowCommand(BaseCommand):
    """Calabi flow diagnostics on an interval."""

    def get_command_name(self) -> str:
        return "flow"

    def get_help(self) -> str:
        return "Run the Calabi flow on a weighted interval"

    def add_command_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("spec", help="Interval JSON file or bundled example name")
        parser.add_argument("--t-end", type=float, default=1.0, help="Final flow time")
        parser.add_argument("--perturb", default=None, help="Initial perturbation in x, e.g. '0.5*x*(1-x)'")
        parser.add_argument("--plot", action="store_true", help="Also write SVG charts")

    def run(self, args: argparse.Namespace) -> int:
        cmd_flow(args.spec, args.t_end, args.perturb, args.plot, args.resolution, args.out, args.seed)
        return 0
