"""
Decomposition of an unstable polytope into the linearity regions of Phi.

When the optimal destabiliser is piecewise linear, its maximal linearity
regions Q_i cut P into pieces. Each piece inherits the boundary weights of
the facets of P it touches; the interior cut faces get weight zero. On each
piece B = D - Phi is affine, and the pieces are expected to be semistable.
"""

import logging
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp
from shapely.geometry import MultiPoint, Polygon

from .convexcone import ConvexGridFunction
from .core.config_manager import get_config_manager
from .core.exceptions import CreaseResolutionFailure, NotPiecewiseLinear, NotUnstable, ValidationError
from .core.number_utils import parse_rational, rational_normal
from .destabilizer import SolverOptions, Verdict, semistability_test
from .functionals import AffineFunction, crease_functional, extremal_affine
from .geometry import Facet, MeasuredPolytope, scalar_summary
from .quadrature import Quadrature, build_quadrature

logger = logging.getLogger(__name__)


class DecompositionOptions:
    """
    Tolerances for linearity-region detection.

    Attributes:
        cluster_cap: Largest number of clusters still reported as piecewise linear
        gradient_tol: Element gradients closer than this (relative) share a cluster
        density_tol: Tolerance for A_i versus B on a piece
        volume_tol: Relative tolerance for coverage and overlap checks
    """

    def __init__(
        self,
        cluster_cap: int = 8,
        gradient_tol: float = 1e-6,
        density_tol: float = 1e-5,
        volume_tol: float = 1e-10,
    ):
        self.cluster_cap = int(cluster_cap)
        self.gradient_tol = gradient_tol
        self.density_tol = density_tol
        self.volume_tol = volume_tol

    @classmethod
    def from_config(cls, **overrides: Any) -> "DecompositionOptions":
        values = get_config_manager().section("decomposition")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class GradientCluster:
    """
    Mesh elements on which Phi has (numerically) the same gradient.

    Attributes:
        elements: Element indices
        nodes: Sorted node indices of those elements
        affine: Least-squares affine fit of Phi on the nodes
        residual: Largest nodal deviation from the fit
    """

    def __init__(self, elements: np.ndarray, nodes: np.ndarray, affine: AffineFunction, residual: float):
        self.elements = elements
        self.nodes = nodes
        self.affine = affine
        self.residual = residual

    def to_dict(self) -> Dict[str, Any]:
        return {
            "elements": int(len(self.elements)),
            "nodes": int(len(self.nodes)),
            "affine": self.affine.to_dict(),
            "residual": self.residual,
        }


class Piece:
    """
    One linearity region of Phi with its inherited measure.

    Attributes:
        subpolytope: Q_i as a MeasuredPolytope (cut faces have weight 0)
        inherited_weights: sigma weights of the facets of Q_i
        local_density: B restricted to Q_i (affine)
        node_set: Mesh nodes of P assigned to the piece
        phi_affine: Phi restricted to Q_i
        verdict: Semistability verdict of (Q_i, d sigma_i) once verified
        extremal: Extremal affine function A_i of the piece once verified
        density_gap: max |A_i - local_density| over the vertices of Q_i
    """

    def __init__(
        self,
        subpolytope: MeasuredPolytope,
        local_density: AffineFunction,
        node_set: np.ndarray,
        phi_affine: AffineFunction,
    ):
        self.subpolytope = subpolytope
        self.inherited_weights = subpolytope.weights
        self.local_density = local_density
        self.node_set = node_set
        self.phi_affine = phi_affine
        self.verdict: Optional[Verdict] = None
        self.extremal: Optional[AffineFunction] = None
        self.density_gap: Optional[float] = None
        self.witness: Optional[Any] = None

    @property
    def volume(self) -> float:
        return float(self.subpolytope.volume)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "facets": [f.to_dict() for f in self.subpolytope.facets],
            "vertices": self.subpolytope.vertex_array.tolist(),
            "volume": self.volume,
            "local_density": self.local_density.to_dict(),
            "phi_affine": self.phi_affine.to_dict(),
            "verdict": self.verdict.value if self.verdict else None,
            "extremal_affine": self.extremal.to_dict() if self.extremal else None,
            "density_gap": self.density_gap,
            "witness": self.witness.to_dict() if hasattr(self.witness, "to_dict") else None,
        }


class DecompositionReport:
    """
    Result of the decomposition pipeline.

    Attributes:
        pieces: List of Piece (empty when Phi is not piecewise linear)
        pl_detected: Whether Phi was recognised as piecewise linear
        verdicts: Per-piece verdicts
        concavity_ok: Whether the glued B is concave across every cut
        coverage: Volume and overlap diagnostics
        histogram: Cluster sizes (always present; the only output on the non-PL path)
        clusters: Cluster summaries
    """

    def __init__(
        self,
        pieces: List[Piece],
        pl_detected: bool,
        concavity_ok: bool,
        coverage: Optional[Dict[str, Any]] = None,
        histogram: Optional[List[int]] = None,
        clusters: Optional[List[GradientCluster]] = None,
    ):
        self.pieces = pieces
        self.pl_detected = pl_detected
        self.verdicts = [p.verdict for p in pieces]
        self.concavity_ok = concavity_ok
        self.coverage = coverage or {}
        self.histogram = histogram or []
        self.clusters = clusters or []

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pl_detected": self.pl_detected,
            "heuristic": "linearity regions are detected from mesh data and are not certified maximal",
            "concavity_ok": self.concavity_ok,
            "coverage": self.coverage,
            "histogram": self.histogram,
            "clusters": [c.to_dict() for c in self.clusters],
            "verdicts": [v.value if v else None for v in self.verdicts],
            "pieces": [p.to_dict() for p in self.pieces],
        }

    def node_table(self) -> List[Dict[str, Any]]:
        """One row per (piece, node) assignment, for CSV export."""
        rows = []
        for i, piece in enumerate(self.pieces):
            for node in piece.node_set:
                rows.append({"piece": i, "node": int(node)})
        return rows


# Clustering

def _fit_cluster(elements: np.ndarray, phi: ConvexGridFunction, quad: Quadrature) -> GradientCluster:
    mesh = quad.mesh
    nodes = np.unique(mesh.elements[elements].ravel())
    pts = mesh.nodes[nodes]
    design = np.hstack([np.ones((len(nodes), 1)), pts])
    coef, *_ = np.linalg.lstsq(design, phi.values[nodes], rcond=None)
    residual = float(np.abs(design @ coef - phi.values[nodes]).max())
    return GradientCluster(elements, nodes, AffineFunction(coef[1:].tolist(), float(coef[0])), residual)


def _hull_overlap(a: np.ndarray, b: np.ndarray) -> float:
    """Overlap measure of the convex hulls of two point sets."""
    if a.shape[1] == 1:
        lo = max(a.min(), b.min())
        hi = min(a.max(), b.max())
        return max(hi - lo, 0.0)
    hull_a = MultiPoint([tuple(p) for p in a[:, :2]]).convex_hull
    hull_b = MultiPoint([tuple(p) for p in b[:, :2]]).convex_hull
    if not isinstance(hull_a, Polygon) or not isinstance(hull_b, Polygon):
        return 0.0
    return float(hull_a.intersection(hull_b).area)


def detect_piecewise_linear(
    phi: ConvexGridFunction,
    quad: Quadrature,
    tol: Optional[float] = None,
    opts: Optional[DecompositionOptions] = None,
) -> Tuple[bool, List[GradientCluster]]:
    """
    Cluster the mesh by the gradient of Phi and decide whether Phi is piecewise linear.

    Element gradients within ``tol`` (Euclidean) share a cluster; clusters
    whose node hulls overlap are merged. Phi is reported piecewise linear
    when there are at most ``cluster_cap`` clusters and each is fit by an
    affine function to within ``tol * max|Phi|``. This is a diagnostic, not
    a proof.

    Args:
        phi: Grid function on quad's mesh
        quad: Quadrature the function lives on
        tol: Gradient tolerance (default: gradient_tol times the largest gradient, at least gradient_tol)
        opts: Decomposition options

    Returns:
        (pl_detected, clusters)

    Example:
        Phi = max(0, 2x - 1) on the unit square at even resolution gives two
        clusters separated by the line x = 1/2.
    """
    if opts is None:
        opts = DecompositionOptions.from_config()
    mesh = quad.mesh
    grads = mesh.element_gradients(phi.values)
    scale = max(1.0, float(np.abs(grads).max(initial=0.0)))
    if tol is None:
        tol = opts.gradient_tol * scale

    reps: List[np.ndarray] = []
    members: List[List[int]] = []
    for e, g in enumerate(grads):
        for k, rep in enumerate(reps):
            if np.linalg.norm(g - rep) <= tol:
                members[k].append(e)
                break
        else:
            reps.append(g.copy())
            members.append([e])

    clusters = [_fit_cluster(np.array(m), phi, quad) for m in members]
    vol_scale = float(quad.mp.volume)
    merged = True
    while merged and len(clusters) > 1:
        merged = False
        for i, j in combinations(range(len(clusters)), 2):
            a = mesh.nodes[clusters[i].nodes]
            b = mesh.nodes[clusters[j].nodes]
            if _hull_overlap(a, b) > opts.volume_tol * vol_scale:
                logger.debug(f"Merging gradient clusters {i} and {j} with overlapping hulls")
                elements = np.concatenate([clusters[i].elements, clusters[j].elements])
                clusters[i] = _fit_cluster(elements, phi, quad)
                del clusters[j]
                merged = True
                break

    phi_scale = max(float(np.abs(phi.values).max(initial=0.0)), 1e-300)
    fits = all(c.residual <= max(tol, 1e-12) * phi_scale + 1e-12 for c in clusters)
    pl = len(clusters) <= opts.cluster_cap and fits
    clusters.sort(key=lambda c: tuple(c.affine.grad_array))
    logger.info(f"Gradient clustering: {len(clusters)} clusters, piecewise linear: {pl}")
    return pl, clusters


# Pieces

def extract_pieces(
    phi: ConvexGridFunction,
    mp: MeasuredPolytope,
    clusters: Sequence[GradientCluster],
    reference: Any = None,
    b_nodal: Optional[np.ndarray] = None,
    opts: Optional[DecompositionOptions] = None,
) -> List[Piece]:
    """
    Cut P into the regions where each cluster's affine function is maximal.

    Piece i is P intersected with {a_i >= a_j} for every other cluster j.
    Facets of P keep their weights; cut faces carry weight 0. The local
    density is D - a_i.

    Args:
        phi: Optimal destabiliser on the mesh
        mp: Measured polytope
        clusters: Output of detect_piecewise_linear
        reference: Reference density D (default: S-hat)
        b_nodal: Nodal B used to check the local densities
        opts: Decomposition options

    Returns:
        Pieces with positive volume

    Raises:
        NotPiecewiseLinear: If no clusters are given
        CreaseResolutionFailure: If cluster hulls overlap beyond tolerance
    """
    if opts is None:
        opts = DecompositionOptions.from_config()
    if not clusters:
        raise NotPiecewiseLinear("No gradient clusters to cut along")
    if reference is None:
        reference = AffineFunction.constant_function(scalar_summary(mp).s_hat, mp.dim)
    vol = float(mp.volume)

    for (i, a), (j, b) in combinations(enumerate(clusters), 2):
        overlap = _hull_overlap(phi.nodes[a.nodes], phi.nodes[b.nodes])
        if overlap > opts.volume_tol * vol:
            logger.error(f"Clusters {i} and {j} overlap by {overlap:.3g}")
            raise CreaseResolutionFailure(
                f"Cluster hulls {i} and {j} overlap by {overlap:.3g}; refine the mesh",
                details={"clusters": [i, j], "overlap": overlap},
            )

    pieces: List[Piece] = []
    for i, cluster in enumerate(clusters):
        region: Optional[MeasuredPolytope] = mp
        for j, other in enumerate(clusters):
            if j == i or region is None:
                continue
            diff = cluster.affine - other.affine
            region = region.clip(diff.grad_array.tolist(), diff.constant_float)
        if region is None or float(region.volume) <= opts.volume_tol * vol:
            logger.debug(f"Cluster {i} has an empty linearity region")
            continue
        local = (reference - cluster.affine).to_float()
        piece = Piece(region, local, cluster.nodes, cluster.affine)
        if b_nodal is not None:
            gap = float(np.abs(local(phi.nodes[cluster.nodes]) - b_nodal[cluster.nodes]).max())
            if gap > opts.density_tol * max(1.0, float(np.abs(b_nodal).max())):
                logger.warning(f"Piece {i}: local density deviates from B by {gap:.3g} on its nodes")
        pieces.append(piece)
    logger.info(f"Extracted {len(pieces)} pieces")
    return pieces


def verify_piece(
    piece: Piece,
    resolution: Optional[int] = None,
    opts: Optional[SolverOptions] = None,
    decomposition_opts: Optional[DecompositionOptions] = None,
) -> Verdict:
    """
    Re-mesh a piece and test its semistability.

    Also records the distance between the piece's extremal affine function
    A_i and its local density on the piece's vertices.

    Args:
        piece: Piece to verify
        resolution: Mesh resolution for the piece (default: the polytope's)
        opts: Solver options

    Returns:
        Verdict of the relative semistability test on (Q_i, d sigma_i)
    """
    if decomposition_opts is None:
        decomposition_opts = DecompositionOptions.from_config()
    sub = piece.subpolytope
    quad = build_quadrature(sub, resolution)
    verdict, witness, _ = semistability_test(sub, quad, opts, certify=False)
    extremal = extremal_affine(sub)
    verts = sub.vertex_array
    gap = float(np.abs(extremal(verts) - piece.local_density(verts)).max())
    piece.verdict = verdict
    piece.witness = witness
    piece.extremal = extremal
    piece.density_gap = gap
    if gap > decomposition_opts.density_tol * max(1.0, float(np.abs(piece.local_density(verts)).max())):
        logger.info(f"Piece extremal function differs from its local density by {gap:.3g}")
    logger.info(f"Piece of volume {piece.volume:.6g}: {verdict.value}")
    return verdict


def check_coverage(
    mp: MeasuredPolytope, pieces: Sequence[Piece], volume_tol: float = 1e-10
) -> Dict[str, Any]:
    """
    Check that pieces cover P and have disjoint interiors.

    Overlaps are measured with shapely polygons in 2-D, intervals in 1-D and
    by clipping one piece with the facets of the other in higher dimensions.
    """
    vol = float(mp.volume)
    total = sum(p.volume for p in pieces)
    max_overlap = 0.0
    for a, b in combinations(pieces, 2):
        pa, pb = a.subpolytope, b.subpolytope
        if mp.dim <= 2:
            overlap = _hull_overlap(pa.vertex_array, pb.vertex_array)
        else:
            region: Optional[MeasuredPolytope] = pa
            for f in pb.facets:
                if region is None:
                    break
                region = region.clip([float(v) for v in f.normal], -float(f.offset))
            overlap = float(region.volume) if region is not None else 0.0
        max_overlap = max(max_overlap, overlap)
    volume_gap = abs(total - vol) / vol
    return {
        "volume": vol,
        "pieces_volume": total,
        "volume_gap": volume_gap,
        "max_overlap": max_overlap,
        "ok": volume_gap <= volume_tol and max_overlap <= volume_tol * vol,
    }


def concavity_check(pieces: Sequence[Piece], tol: float = 1e-9) -> bool:
    """
    Check that the glued density is min(B_i, B_j) near every cut.

    On the centroid of each piece its own density must not exceed any
    neighbour's.
    """
    ok = True
    for a, b in combinations(pieces, 2):
        for own, other in ((a, b), (b, a)):
            c = own.subpolytope.centroid[None, :]
            if float(own.local_density(c)[0]) > float(other.local_density(c)[0]) + tol:
                ok = False
    return ok


def decompose(
    mp: MeasuredPolytope,
    phi: ConvexGridFunction,
    quad: Quadrature,
    reference: Any = None,
    b_nodal: Optional[np.ndarray] = None,
    opts: Optional[DecompositionOptions] = None,
    solver_opts: Optional[SolverOptions] = None,
    verify: bool = True,
    require_unstable: bool = False,
    epsilon: Optional[float] = None,
) -> DecompositionReport:
    """
    Detect, extract, verify and check the linearity pieces of Phi.

    Args:
        mp: Measured polytope
        phi: Optimal destabiliser on quad's mesh
        quad: Quadrature of mp
        reference: Reference density D
        b_nodal: Nodal B for consistency checks
        opts: Decomposition options
        solver_opts: Options for the per-piece semistability tests
        verify: Run verify_piece on each piece
        require_unstable: Raise NotUnstable when ||Phi|| <= epsilon
        epsilon: Stability threshold on ||Phi||

    Returns:
        DecompositionReport; on the non-PL path it carries only the cluster histogram

    Raises:
        NotUnstable: If require_unstable and Phi vanishes
        CreaseResolutionFailure: If cluster hulls overlap
    """
    if opts is None:
        opts = DecompositionOptions.from_config()
    if require_unstable:
        threshold = epsilon if epsilon is not None else 1e-7 * float(mp.vol_sigma)
        if quad.mesh.norm(phi.values) <= threshold:
            raise NotUnstable("Phi vanishes; the polytope has no destabilising decomposition")

    pl, clusters = detect_piecewise_linear(phi, quad, opts=opts)
    histogram = sorted((len(c.elements) for c in clusters), reverse=True)
    if not pl:
        logger.warning(f"Phi is not piecewise linear at this resolution ({len(clusters)} clusters)")
        return DecompositionReport([], False, False, histogram=histogram, clusters=clusters)

    pieces = extract_pieces(phi, mp, clusters, reference, b_nodal, opts)
    if verify:
        for piece in pieces:
            verify_piece(piece, quad.mesh.resolution, solver_opts, opts)
    coverage = check_coverage(mp, pieces, opts.volume_tol)
    if not coverage["ok"]:
        logger.warning(f"Piece coverage check failed: {coverage}")
    report = DecompositionReport(
        pieces,
        True,
        concavity_check(pieces),
        coverage=coverage,
        histogram=histogram,
        clusters=clusters,
    )
    logger.info(
        f"Decomposition: {len(pieces)} pieces, concavity {'ok' if report.concavity_ok else 'violated'}"
    )
    return report


# Trapezium family

def trapezium_mp(l: Any, name: Optional[str] = None, resolution: Optional[int] = None) -> MeasuredPolytope:
    """
    The trapezium with vertices (0,0), (1,0), (1,l), (0,1).

    The vertical edges carry weight 1; the bottom and slanted edges weight 0.

    Args:
        l: Positive rational height of the right edge
    """
    l = parse_rational(l)
    if l <= 0:
        raise ValidationError(f"Trapezium height must be positive, got {l}")
    top, factor = rational_normal([l - 1, -1])
    facets = [
        Facet([1, 0], 0, 1),
        Facet([-1, 0], -1, 1),
        Facet([0, 1], 0, 0),
        Facet(top, -factor, 0),
    ]
    return MeasuredPolytope(
        facets,
        name=name or f"trapezium_l{l}",
        resolution=resolution,
        density_mode="extremal",
    )


def trapezium_reference(l: Any, us: Optional[Sequence[Any]] = None, ts: Optional[Sequence[Any]] = None) -> Dict[str, Any]:
    """
    Closed-form extremal function of the trapezium and its crease values.

    A(x, y) = (12 (l^2 - 1) x - 6 (l^2 - 2l - 1)) / (l^2 + 4l + 1). The
    crease functions joining (0, u) and (1, ul) all have L_A = 0, and the
    kernel slack g(0) + l g(1) - integral of (1 + (l-1)x) A(x) g(x) dx is
    non-negative for g = max(0, x - t).

    Args:
        l: Positive rational
        us: Crease heights (default 1/10, ..., 9/10)
        ts: Kernel break points (default 0, 1/10, ..., 1)

    Returns:
        Dictionary with ``A`` (AffineFunction), ``crease_values`` {u: L_A}
        and ``kernel_slack`` {t: slack}, all exact

    Example:
        l = 1 gives A = 2, constant.
    """
    l = parse_rational(l)
    if l <= 0:
        raise ValidationError(f"Trapezium height must be positive, got {l}")
    denom = l ** 2 + 4 * l + 1
    a = AffineFunction([12 * (l ** 2 - 1) / denom, 0], -6 * (l ** 2 - 2 * l - 1) / denom)
    if us is None:
        us = [sp.Rational(k, 10) for k in range(1, 10)]
    if ts is None:
        ts = [sp.Rational(k, 10) for k in range(0, 11)]

    mp = trapezium_mp(l)
    crease_values = {}
    for u in us:
        u = parse_rational(u)
        # h >= 0 above the segment from (0, u) to (1, ul)
        h = AffineFunction([-u * (l - 1), 1], -u)
        crease_values[u] = crease_functional(mp, a, h).value

    x = sp.Symbol("x")
    a_x = a.gradient[0] * x + a.constant
    kernel_slack = {}
    for t in ts:
        t = parse_rational(t)
        integral = sp.integrate((1 + (l - 1) * x) * a_x * (x - t), (x, t, 1))
        kernel_slack[t] = l * (1 - t) - integral
    return {"A": a, "crease_values": crease_values, "kernel_slack": kernel_slack}
