"""
The ``decompose`` subcommand: linearity pieces of the optimal destabiliser.
"""

import argparse
import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..convexcone import ConvexGridFunction, grid_function_from_values
from ..core.exceptions import FileOperationError, NotPiecewiseLinear, ValidationError
from ..core.export_utils import export_to_csv, export_to_json
from ..core.validation import validate_path
from ..decomposition import DecompositionReport, decompose
from ..destabilizer import SolverOptions, solve_optimal_destabilizer
from ..functionals import AffineFunction, extremal_affine
from ..geometry import scalar_summary
from ..quadrature import Quadrature, build_quadrature
from ..report import RunReport
from .base_command import BaseCommand, load_spec, output_dir

logger = logging.getLogger(__name__)


@validate_path("path", must_exist=True)
def load_phi(path: Union[str, Path], quad: Quadrature) -> ConvexGridFunction:
    """
    Read Phi from a CSV with columns x0, ..., value on the mesh nodes of quad.

    Raises:
        FileOperationError: If the file cannot be read
        ValidationError: If the nodes do not match the mesh
    """
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError) as e:
        raise FileOperationError(f"Cannot read Phi from {path}: {e}") from e
    dim = quad.dim
    columns = [f"x{i}" for i in range(dim)]
    if any(c not in frame.columns for c in columns + ["value"]):
        raise ValidationError(f"Phi CSV needs columns {columns + ['value']}")
    nodes = frame[columns].to_numpy(dtype=float)
    if nodes.shape != quad.mesh_nodes.shape or not np.allclose(nodes, quad.mesh_nodes, atol=1e-9):
        raise ValidationError("Phi CSV nodes do not match the mesh; check --resolution")
    return grid_function_from_values(frame["value"].to_numpy(dtype=float), quad)


def cmd_decompose(
    spec: Union[str, Path],
    resolution: Optional[int] = None,
    seed: int = 42,
    out: Optional[Union[str, Path]] = None,
    phi_path: Optional[Union[str, Path]] = None,
    density: Optional[str] = None,
) -> Tuple[RunReport, DecompositionReport]:
    """
    Decompose an unstable polytope along the linearity regions of Phi.

    Writes decomposition.json and nodes.csv.

    Raises:
        NotUnstable: If Phi vanishes
        NotPiecewiseLinear: If Phi is not recognised as piecewise linear
        CreaseResolutionFailure: If linearity regions overlap at this resolution
    """
    mp = load_spec(spec)
    mode = density or mp.density_mode
    quad = build_quadrature(mp, resolution)
    opts = SolverOptions.from_config(seed=seed)
    reference = (
        extremal_affine(mp) if mode == "extremal"
        else AffineFunction.constant_function(scalar_summary(mp).s_hat, mp.dim)
    )
    if phi_path is not None:
        phi = load_phi(phi_path, quad)
        b_nodal = reference(quad.mesh_nodes) - phi.values
        epsilon = opts.eps_rel * float(mp.vol_sigma)
    else:
        result = solve_optimal_destabilizer(mp, quad, opts, density=reference, certify=False, classify=False)
        phi, b_nodal, epsilon = result.phi, result.b_density, result.epsilon

    decomposition = decompose(
        mp, phi, quad, reference, b_nodal, solver_opts=opts, require_unstable=True, epsilon=epsilon
    )
    if not decomposition.pl_detected:
        logger.error("Phi is not piecewise linear at this resolution")
        raise NotPiecewiseLinear(
            "Phi is not piecewise linear at this resolution; refine the mesh or inspect the histogram",
            details={"histogram": decomposition.histogram},
        )

    report = RunReport("decompose", mp.to_document(), seed, quad.mesh.resolution)
    report.add("density_mode", mode)
    report.add("scalar_summary", scalar_summary(mp).to_dict())
    report.add("decomposition", decomposition.to_dict())
    folder = output_dir(out)
    export_to_json(report.to_dict(), folder / "decomposition.json")
    export_to_csv(pd.DataFrame(decomposition.node_table(), columns=["piece", "node"]), folder / "nodes.csv")
    logger.info(f"decompose {mp.name or spec}: {len(decomposition.pieces)} pieces")
    return report, decomposition


class DecomposeCommand(BaseCommand):
    """Linearity pieces of Phi with per-piece verdicts."""

    def get_command_name(self) -> str:
        return "decompose"

    def get_help(self) -> str:
        return "Split an unstable polytope into the linearity pieces of Phi"

    def add_command_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("spec", help="Polytope JSON file or bundled example name")
        parser.add_argument("--phi", default=None, help="Decompose this Phi CSV instead of solving")
        parser.add_argument(
            "--density", choices=["constant", "extremal"], default=None,
            help="Reference density (default: from the document)",
        )

    def run(self, args: argparse.Namespace) -> int:
        cmd_decompose(args.spec, args.resolution, args.seed, args.out, args.phi, args.density)
        return 0
