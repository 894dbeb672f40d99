"""Conforming simplicial meshes and quadrature rules on measured polytopes.

Every simplex of the polytope's fan triangulation is subdivided with the
Freudenthal (Kuhn) scheme at a common resolution. Coarse vertices are
ordered by their global index, so the induced subdivisions of shared faces
agree and the union is a conforming mesh.

The mesh carries the P1 finite element data used everywhere downstream:
consistent mass matrix, lumped node weights, boundary node weights (exact
for P1 integrands) and the element gradient operator.
"""

import logging
import math
from itertools import combinations, permutations, product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .core.config_manager import get_config_manager
from .core.exceptions import ResolutionTooSmall, ValidationError
from .geometry import MeasuredPolytope

logger = logging.getLogger(__name__)

NODE_DECIMALS = 12


def graded_parameters(resolution: int, grading: float) -> np.ndarray:
    """
    Symmetric graded points on [0, 1]: s -> (2s)^g / 2 on the left half.

    Args:
        resolution: Number of intervals
        grading: Exponent g >= 1 (1 gives a uniform grid)
    """
    s = np.arange(resolution + 1) / resolution
    if grading == 1.0:
        return s
    left = 0.5 * (2.0 * np.minimum(s, 1.0 - s)) ** grading
    return np.where(s <= 0.5, left, 1.0 - left)


def _freudenthal_reference(resolution: int, dim: int) -> Tuple[List[Tuple[int, ...]], List[Tuple]]:
    """Integer points and sub-simplices of the ordered simplex N >= y1 >= ... >= yn >= 0."""
    points = [
        y for y in product(range(resolution + 1), repeat=dim)
        if all(y[i] >= y[i + 1] for i in range(dim - 1))
    ]
    inside = set(points)
    cells = []
    for base in product(range(resolution), repeat=dim):
        for perm in permutations(range(dim)):
            corner = list(base)
            verts = [tuple(corner)]
            for axis in perm:
                corner[axis] += 1
                verts.append(tuple(corner))
            if all(v in inside for v in verts):
                cells.append(tuple(verts))
    return points, cells


def _barycentric(y: Tuple[int, ...], resolution: int) -> np.ndarray:
    dim = len(y)
    lam = np.empty(dim + 1)
    lam[0] = 1.0 - y[0] / resolution
    for k in range(1, dim + 1):
        nxt = y[k] if k < dim else 0
        lam[k] = (y[k - 1] - nxt) / resolution
    return lam


class Mesh:
    """
    Conforming simplicial mesh of a polytope with P1 element data.

    Attributes:
        nodes: (N, n) node coordinates
        elements: (E, n+1) node indices per element
        volumes: (E,) element volumes
        boundary_faces: (F, n) node indices of boundary faces
        boundary_facet: (F,) index of the polytope facet each face lies on
        boundary_measure: (F,) canonical measure of each face (unweighted)
        edges: (K, 2) sorted node index pairs joined by an element edge
        mass: consistent P1 mass matrix (sparse, N x N)
        lumped: (N,) integrals of the P1 hat functions
        boundary_weights: (N,) weighted boundary integrals of the hat functions
        vertex_nodes: node index of each polytope vertex
        h: longest element edge
    """

    def __init__(self, mp: MeasuredPolytope, resolution: int, grading: float = 1.0):
        self.dim = mp.dim
        self.resolution = resolution
        self.grading = grading
        if mp.dim == 1:
            self._build_interval(mp, resolution, grading)
        else:
            if grading != 1.0:
                logger.warning(f"Grading {grading} ignored on a {mp.dim}-dimensional mesh")
                self.grading = 1.0
            self._build_freudenthal(mp, resolution)
        self._element_data()
        self._face_data(mp)
        self.vertex_nodes = [self.nearest_node(np.array(v, dtype=float)) for v in mp.vertex_array]

    # assembly

    def _build_interval(self, mp: MeasuredPolytope, resolution: int, grading: float) -> None:
        a, b = mp.vertex_array[0, 0], mp.vertex_array[-1, 0]
        self.nodes = (a + (b - a) * graded_parameters(resolution, grading))[:, None]
        self.elements = np.array([[i, i + 1] for i in range(resolution)], dtype=int)

    def _build_freudenthal(self, mp: MeasuredPolytope, resolution: int) -> None:
        ref_points, ref_cells = _freudenthal_reference(resolution, mp.dim)
        bary = {y: _barycentric(y, resolution) for y in ref_points}
        coords = mp.vertex_array
        index: Dict[Tuple, int] = {}
        nodes: List[np.ndarray] = []
        elements: List[List[int]] = []

        def node_id(point: np.ndarray) -> int:
            key = tuple(np.round(point, NODE_DECIMALS) + 0.0)
            if key not in index:
                index[key] = len(nodes)
                nodes.append(point)
            return index[key]

        for simplex in mp.simplices:
            corners = coords[sorted(simplex)]
            local = {y: node_id(bary[y] @ corners) for y in ref_points}
            for cell in ref_cells:
                elements.append([local[y] for y in cell])
        self.nodes = np.array(nodes)
        self.elements = np.array(elements, dtype=int)

    def _element_data(self) -> None:
        n = self.dim
        pts = self.nodes[self.elements]
        edges = pts[:, 1:, :] - pts[:, :1, :]
        dets = np.linalg.det(edges)
        self.volumes = np.abs(dets) / math.factorial(n)
        inv_t = np.linalg.inv(np.transpose(edges, (0, 2, 1)))
        grads = np.empty((len(self.elements), n + 1, n))
        grads[:, 1:, :] = inv_t
        grads[:, 0, :] = -inv_t.sum(axis=1)
        self.basis_gradients = grads

        rows, cols, vals = [], [], []
        local = (np.ones((n + 1, n + 1)) + np.eye(n + 1)) / ((n + 1) * (n + 2))
        for e, elem in enumerate(self.elements):
            for a in range(n + 1):
                for b in range(n + 1):
                    rows.append(elem[a])
                    cols.append(elem[b])
                    vals.append(self.volumes[e] * local[a, b])
        size = len(self.nodes)
        self.mass = sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))
        self.lumped = np.asarray(self.mass.sum(axis=1)).ravel()

        g_rows, g_cols, g_vals = [], [], []
        for e, elem in enumerate(self.elements):
            for i in range(n):
                for a in range(n + 1):
                    g_rows.append(e * n + i)
                    g_cols.append(elem[a])
                    g_vals.append(grads[e, a, i])
        self.gradient_operator = sparse.csr_matrix(
            (g_vals, (g_rows, g_cols)), shape=(len(self.elements) * n, size)
        )
        edge_lengths = [
            np.linalg.norm(pts[:, a, :] - pts[:, b, :], axis=1)
            for a, b in combinations(range(n + 1), 2)
        ]
        self.h = float(np.max(edge_lengths))
        self.edges = np.array(sorted({
            (int(min(a, b)), int(max(a, b)))
            for elem in self.elements
            for a, b in combinations(elem, 2)
        }), dtype=int)

    def _face_data(self, mp: MeasuredPolytope) -> None:
        n = self.dim
        owners: Dict[Tuple[int, ...], List[int]] = {}
        for e, elem in enumerate(self.elements):
            for face in combinations(sorted(elem), n):
                owners.setdefault(face, []).append(e)

        tol = 1e-9 * (1.0 + float(np.abs(self.nodes).max()))
        normals = np.array([f.normal_array for f in mp.facets])
        offsets = np.array([float(f.offset) for f in mp.facets])
        b_faces, b_facet, b_measure = [], [], []
        for face, elems in owners.items():
            if len(elems) == 2:
                continue
            slack = np.abs(self.nodes[list(face)] @ normals.T - offsets).max(axis=0)
            candidates = [k for k in mp.faces if slack[k] <= tol]
            if not candidates:
                raise ValidationError(f"Boundary face {face} lies on no facet")
            k = candidates[0]
            b_faces.append(face)
            b_facet.append(k)
            b_measure.append(self._face_measure(face, normals[k]))
        self.boundary_faces = np.array(b_faces, dtype=int).reshape(-1, n)
        self.boundary_facet = np.array(b_facet, dtype=int)
        self.boundary_measure = np.array(b_measure, dtype=float)

        weights = np.array([float(f.sigma_weight) for f in mp.facets])
        self.face_weights = weights[self.boundary_facet] * self.boundary_measure
        self.boundary_weights = np.zeros(len(self.nodes))
        for face, w in zip(self.boundary_faces, self.face_weights):
            self.boundary_weights[face] += w / n

    def _face_measure(self, face: Sequence[int], normal: np.ndarray) -> float:
        pts = self.nodes[list(face)]
        e = normal / float(normal @ normal)
        rows = np.vstack([pts[1:] - pts[0], e])
        return abs(float(np.linalg.det(rows))) / math.factorial(self.dim - 1)

    # queries

    @property
    def size(self) -> int:
        return len(self.nodes)

    def nearest_node(self, point: np.ndarray) -> int:
        return int(np.argmin(np.linalg.norm(self.nodes - point, axis=1)))

    def element_gradients(self, values: np.ndarray) -> np.ndarray:
        """(E, n) gradients of the P1 interpolant of nodal values."""
        return (self.gradient_operator @ values).reshape(len(self.elements), self.dim)

    def integrate(self, values: np.ndarray) -> float:
        """Exact integral of a P1 function over P."""
        return float(self.lumped @ values)

    def integrate_boundary(self, values: np.ndarray) -> float:
        """Exact d-sigma integral of a P1 function over the boundary."""
        return float(self.boundary_weights @ values)

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Exact L2 inner product of two P1 functions."""
        return float(f @ (self.mass @ g))

    def norm(self, f: np.ndarray) -> float:
        return math.sqrt(max(self.inner(f, f), 0.0))


def _degree_two_rule(dim: int) -> Tuple[float, float]:
    if dim == 0:
        return 1.0, 0.0
    alpha = (dim + 2 + dim * math.sqrt(dim + 2)) / ((dim + 1) * (dim + 2))
    beta = (1.0 - alpha) / dim
    return alpha, beta


class Quadrature:
    """
    Interior and boundary quadrature on a mesh of a measured polytope.

    Attributes:
        mesh: The underlying Mesh
        interior_nodes: (Q, n) interior points
        interior_weights: (Q,) positive weights summing to Vol(P, d mu)
        interior_interp: sparse (Q, N) P1 interpolation from mesh nodes
        boundary_nodes: (B, n) boundary points
        boundary_weights: (B,) weights (zero on zero-weight facets)
        boundary_facet: (B,) facet tag of each boundary node
        mesh_nodes: the distinct mesh nodes (the cone's evaluation grid)
        exactness_degree: polynomial degree integrated exactly per simplex
    """

    def __init__(self, mp: MeasuredPolytope, mesh: Mesh):
        self.mp = mp
        self.mesh = mesh
        self.exactness_degree = 2
        n = mp.dim

        alpha, beta = _degree_two_rule(n)
        pts, wts, rows, cols, vals = [], [], [], [], []
        for e, elem in enumerate(mesh.elements):
            corners = mesh.nodes[elem]
            for k in range(n + 1):
                coef = np.full(n + 1, beta)
                coef[k] = alpha
                q = len(pts)
                pts.append(coef @ corners)
                wts.append(mesh.volumes[e] / (n + 1))
                rows.extend([q] * (n + 1))
                cols.extend(elem.tolist())
                vals.extend(coef.tolist())
        self.interior_nodes = np.array(pts)
        self.interior_weights = np.array(wts)
        self.interior_interp = sparse.csr_matrix(
            (vals, (rows, cols)), shape=(len(pts), mesh.size)
        )

        alpha_b, beta_b = _degree_two_rule(n - 1)
        b_pts, b_wts, b_tags = [], [], []
        for face, k, w in zip(mesh.boundary_faces, mesh.boundary_facet, mesh.face_weights):
            corners = mesh.nodes[face]
            for j in range(n):
                coef = np.full(n, beta_b)
                coef[j] = alpha_b
                b_pts.append(coef @ corners)
                b_wts.append(w / n)
                b_tags.append(k)
        self.boundary_nodes = np.array(b_pts).reshape(-1, n)
        self.boundary_weights = np.array(b_wts)
        self.boundary_facet = np.array(b_tags, dtype=int)

    @property
    def mesh_nodes(self) -> np.ndarray:
        return self.mesh.nodes

    @property
    def dim(self) -> int:
        return self.mp.dim

    def integrate_interior(self, values: np.ndarray) -> float:
        """Quadrature sum over interior nodes."""
        return float(self.interior_weights @ values)

    def integrate_boundary(self, values: np.ndarray) -> float:
        """Quadrature sum over boundary nodes."""
        return float(self.boundary_weights @ values)

    def to_interior(self, nodal: np.ndarray) -> np.ndarray:
        """Values of the P1 interpolant at the interior quadrature nodes."""
        return self.interior_interp @ nodal

    def to_dict(self) -> Dict[str, object]:
        return {
            "resolution": self.mesh.resolution,
            "grading": self.mesh.grading,
            "mesh_nodes": int(self.mesh.size),
            "elements": int(len(self.mesh.elements)),
            "interior_nodes": int(len(self.interior_nodes)),
            "boundary_nodes": int(len(self.boundary_nodes)),
            "exactness_degree": self.exactness_degree,
            "h": self.mesh.h,
        }


def build_quadrature(
    mp: MeasuredPolytope,
    resolution: Optional[int] = None,
    grading: Optional[float] = None,
) -> Quadrature:
    """
    Mesh a measured polytope and build its quadrature rules.

    Resolution and grading fall back to the polytope document's mesh block,
    then to the ``mesh`` configuration section.

    Args:
        mp: Measured polytope
        resolution: Subdivisions per fan simplex edge (>= 2)
        grading: Boundary grading exponent (>= 1, honoured in 1-D only)

    Returns:
        Quadrature exact for P1 integrands on the mesh and degree-2 polynomials

    Raises:
        ResolutionTooSmall: If resolution < 2
        ValidationError: If grading < 1

    Example:
        >>> quad = build_quadrature(parse_polytope("examples/square.json"), 2)
        >>> round(quad.interior_weights.sum(), 12)
        1.0
    """
    config = get_config_manager()
    if resolution is None:
        resolution = mp.resolution or int(config.get("mesh/resolution", 8))
    if grading is None:
        grading = mp.grading or float(config.get("mesh/grading", 1.0))
    if resolution < 2:
        raise ResolutionTooSmall(f"Resolution must be at least 2, got {resolution}")
    if grading < 1.0:
        raise ValidationError(f"Grading must be >= 1, got {grading}")

    mesh = Mesh(mp, int(resolution), float(grading))
    quad = Quadrature(mp, mesh)
    logger.info(
        f"Built quadrature: {mesh.size} nodes, {len(mesh.elements)} elements, "
        f"{len(quad.boundary_nodes)} boundary nodes, h={mesh.h:.4g}"
    )
    return quad
