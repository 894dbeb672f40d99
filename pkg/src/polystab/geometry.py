"""Measured moment polytopes: H-representation, vertices, triangulation, volumes and moments.

A polytope is given by facets nu_k . x >= c_k with primitive integral inward
normals. Each facet carries a non-negative ``sigma_weight`` multiplying the
canonical boundary density 1/|nu_k|, the unique density with
d(sigma) ^ dh_k = d(mu).

Polytopes whose data are rational are *exact*: vertices, volumes and moments
are sympy Rationals. Clipping by a float half-space produces a float polytope
with the same interface; cut facets have weight zero.
"""

import json
import logging
import math
from itertools import combinations
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .core.exceptions import (
    DegreeUnsupported,
    EmptyInterior,
    MalformedDocument,
    NonPrimitiveNormal,
    UnboundedPolytope,
)
from .core.number_utils import is_exact, is_primitive, parse_rational, rational_normal
from .core.validation import validate_range

logger = logging.getLogger(__name__)

Number = Any
Point = Tuple[Number, ...]

FLOAT_TOL = 1e-10


class Facet:
    """
    One facet inequality nu . x >= c of a polytope.

    Attributes:
        normal: Inward normal (primitive integral unless ``cut``)
        offset: Right-hand side c
        sigma_weight: Multiplier on the canonical boundary density
        cut: True for interior faces created by clipping (weight is forced to 0)
    """

    def __init__(
        self,
        normal: Sequence[Number],
        offset: Number,
        sigma_weight: Number = 1,
        cut: bool = False,
    ):
        self.cut = cut
        if cut:
            self.normal: Tuple[Number, ...] = tuple(normal)
            self.offset: Number = offset
            self.sigma_weight: Number = sp.Integer(0) if is_exact(offset) else 0.0
        else:
            self.normal = tuple(int(v) for v in normal)
            self.offset = offset
            self.sigma_weight = sigma_weight

    @property
    def dim(self) -> int:
        return len(self.normal)

    @property
    def exact(self) -> bool:
        return (
            all(isinstance(v, int) or is_exact(v) for v in self.normal)
            and is_exact(self.offset)
            and is_exact(self.sigma_weight)
        )

    @property
    def normal_array(self) -> np.ndarray:
        return np.array([float(v) for v in self.normal])

    def value(self, point: Sequence[Number]) -> Number:
        """Slack nu . x - c (non-negative inside)."""
        return sum(n * x for n, x in zip(self.normal, point)) - self.offset

    def to_dict(self) -> Dict[str, Any]:
        return {
            "normal": [str(v) if is_exact(v) else float(v) for v in self.normal],
            "offset": str(self.offset) if is_exact(self.offset) else float(self.offset),
            "sigma_weight": (
                str(self.sigma_weight) if is_exact(self.sigma_weight) else float(self.sigma_weight)
            ),
            "cut": self.cut,
        }

    def __repr__(self) -> str:
        kind = "cut " if self.cut else ""
        return f"Facet({kind}{self.normal} . x >= {self.offset}, w={self.sigma_weight})"


def canonical_facet_density(facet: Facet) -> Number:
    """
    Factor converting Euclidean (n-1)-measure on a facet to the canonical measure.

    For a primitive normal nu the density is 1/|nu|_2, so that an edge of the
    standard triangle with normal (1, 1) and length sqrt(2) has canonical
    measure 1.

    Args:
        facet: Facet with primitive integral normal

    Returns:
        Positive density (sympy expression for exact facets)
    """
    if facet.exact:
        return 1 / sp.sqrt(sum(sp.Rational(v) ** 2 for v in facet.normal))
    return 1.0 / float(np.linalg.norm(facet.normal_array))


class ScalarSummary:
    """
    Volumes and average scalar curvature of a measured polytope.

    Attributes:
        vol_mu: Vol(P, d mu)
        vol_sigma: Vol(dP, d sigma)
        s_hat: vol_sigma / vol_mu
    """

    def __init__(self, vol_mu: Number, vol_sigma: Number):
        self.vol_mu = vol_mu
        self.vol_sigma = vol_sigma
        self.s_hat = vol_sigma / vol_mu

    def to_dict(self) -> Dict[str, Any]:
        return {
            "vol_mu": _render(self.vol_mu),
            "vol_sigma": _render(self.vol_sigma),
            "s_hat": _render(self.s_hat),
        }


def _render(value: Number) -> Any:
    if is_exact(value):
        return {"exact": str(value), "float": float(value)}
    return float(value)


# Linear algebra on exact or float data

def _det(rows: List[List[Number]], exact: bool) -> Number:
    if exact:
        return sp.Matrix(rows).det()
    return float(np.linalg.det(np.array(rows, dtype=float)))


def _affine_rank(points: List[Point], exact: bool) -> int:
    if len(points) <= 1:
        return 0
    base = points[0]
    rows = [[p[i] - base[i] for i in range(len(base))] for p in points[1:]]
    if exact:
        return sp.Matrix(rows).rank()
    arr = np.array(rows, dtype=float)
    scale = max(1.0, float(np.abs(arr).max()))
    return int(np.linalg.matrix_rank(arr, tol=1e-9 * scale))


class Polytope:
    """
    A bounded full-dimensional polytope in H-representation with derived data.

    Attributes:
        dim: Ambient dimension n
        facets: Facet inequalities (redundant ones allowed)
        vertices: Vertices (tuples of sympy Rationals or floats), sorted
        incidence: For each facet, the frozenset of vertex indices on it
        faces: Indices of facets that are genuine codimension-one faces
        simplices: Fan triangulation as tuples of vertex indices
        exact: True when every number is rational
    """

    def __init__(
        self, facets: Sequence[Facet], check_primitive: bool = True, validate: bool = True
    ):
        if not facets:
            raise MalformedDocument("A polytope needs at least one facet")
        self.dim = facets[0].dim
        if self.dim < 1:
            raise MalformedDocument("Dimension must be at least 1")
        for k, facet in enumerate(facets):
            if facet.dim != self.dim:
                raise MalformedDocument(
                    f"Facet {k} has a normal of length {facet.dim}, expected {self.dim}"
                )
            if all(v == 0 for v in facet.normal):
                raise MalformedDocument(f"Facet {k} has a zero normal")
            if check_primitive and not facet.cut and not is_primitive(facet.normal):
                raise NonPrimitiveNormal(
                    f"Facet {k} normal {facet.normal} is not primitive", facet_index=k
                )
            if facet.sigma_weight < 0:
                raise MalformedDocument(f"Facet {k} has a negative sigma_weight")

        self.facets: List[Facet] = list(facets)
        self.exact = all(f.exact for f in self.facets)

        if validate:
            self._check_interior()
            self._check_bounded()
        self.vertices: List[Point] = self._enumerate_vertices()
        if not validate and _affine_rank(self.vertices, self.exact) < self.dim:
            raise EmptyInterior("Clipped region is lower dimensional")
        self.incidence: List[FrozenSet[int]] = [
            frozenset(i for i, v in enumerate(self.vertices) if self._on_facet(f, v))
            for f in self.facets
        ]
        self.faces: List[int] = [
            k for k, inc in enumerate(self.incidence)
            if len(inc) >= self.dim
            and _affine_rank([self.vertices[i] for i in sorted(inc)], self.exact) == self.dim - 1
        ]
        self.simplices: List[Tuple[int, ...]] = self._triangulate(
            tuple(range(len(self.vertices))), self.dim, frozenset()
        )
        self._facet_simplices: Dict[int, List[Tuple[int, ...]]] = {}
        self._volume: Optional[Number] = None

    # construction helpers

    def _on_facet(self, facet: Facet, vertex: Point) -> bool:
        value = facet.value(vertex)
        if self.exact:
            return value == 0
        return abs(float(value)) <= FLOAT_TOL * (1.0 + abs(float(facet.offset)))

    def _lp_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        normals = np.array([f.normal_array for f in self.facets])
        offsets = np.array([float(f.offset) for f in self.facets])
        return normals, offsets

    def _check_interior(self) -> None:
        """Chebyshev-ball LP: the polytope must contain a ball of positive radius."""
        normals, offsets = self._lp_arrays()
        norms = np.linalg.norm(normals, axis=1)
        n = self.dim
        c = np.zeros(n + 1)
        c[-1] = -1.0
        a_ub = np.hstack([-normals, norms[:, None]])
        b_ub = -offsets
        bounds = [(None, None)] * n + [(0.0, 1.0)]
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status == 2 or (res.status == 0 and res.x[-1] <= 1e-12):
            raise EmptyInterior("Facet inequalities have no interior point")
        if res.status not in (0, 3):
            raise EmptyInterior(f"Interior check failed: {res.message}")

    def _check_bounded(self) -> None:
        """The recession cone {d : nu_k . d >= 0} must be trivial."""
        normals, _ = self._lp_arrays()
        n = self.dim
        for i in range(n):
            for sign in (1.0, -1.0):
                c = np.zeros(n)
                c[i] = -sign
                res = linprog(
                    c, A_ub=-normals, b_ub=np.zeros(len(normals)),
                    bounds=[(-1.0, 1.0)] * n, method="highs",
                )
                if res.status == 0 and -res.fun > 1e-12:
                    raise UnboundedPolytope(
                        f"Facet inequalities are unbounded along direction {res.x.round(6).tolist()}"
                    )

    def _enumerate_vertices(self) -> List[Point]:
        n = self.dim
        found: Dict[Tuple, Point] = {}
        for combo in combinations(range(len(self.facets)), n):
            rows = [list(self.facets[k].normal) for k in combo]
            rhs = [self.facets[k].offset for k in combo]
            if self.exact:
                mat = sp.Matrix(rows)
                if mat.det() == 0:
                    continue
                sol = mat.LUsolve(sp.Matrix(rhs))
                point: Point = tuple(sol)
                if all(f.value(point) >= 0 for f in self.facets):
                    found.setdefault(point, point)
            else:
                mat = np.array(rows, dtype=float)
                if abs(np.linalg.det(mat)) < 1e-14 * max(1.0, np.abs(mat).max() ** n):
                    continue
                sol = np.linalg.solve(mat, np.array(rhs, dtype=float))
                if all(
                    float(f.value(sol)) >= -FLOAT_TOL * (1.0 + abs(float(f.offset)))
                    for f in self.facets
                ):
                    key = tuple(np.round(sol, 9) + 0.0)
                    found.setdefault(key, tuple(float(v) for v in sol))
        vertices = sorted(found.values(), key=lambda p: tuple(float(v) for v in p))
        if len(vertices) < n + 1:
            raise EmptyInterior(f"Only {len(vertices)} vertices found in dimension {n}")
        return vertices

    def _triangulate(
        self, vert_ids: Tuple[int, ...], face_dim: int, containing: FrozenSet[int]
    ) -> List[Tuple[int, ...]]:
        """Recursive fan triangulation of a face from its lowest-index vertex."""
        if face_dim == 0:
            return [(vert_ids[0],)]
        if len(vert_ids) == face_dim + 1:
            return [tuple(vert_ids)]
        apex = vert_ids[0]
        members = set(vert_ids)
        seen = set()
        result: List[Tuple[int, ...]] = []
        for k, inc in enumerate(self.incidence):
            if k in containing:
                continue
            sub = tuple(sorted(members & inc))
            if apex in sub or len(sub) < face_dim or sub in seen:
                continue
            if _affine_rank([self.vertices[i] for i in sub], self.exact) != face_dim - 1:
                continue
            seen.add(sub)
            for simplex in self._triangulate(sub, face_dim - 1, containing | {k}):
                result.append((apex,) + simplex)
        return result

    # derived quantities

    @property
    def vertex_array(self) -> np.ndarray:
        return np.array([[float(v) for v in p] for p in self.vertices])

    def simplex_points(self, simplex: Tuple[int, ...]) -> List[Point]:
        return [self.vertices[i] for i in simplex]

    def simplex_volume(self, simplex: Tuple[int, ...]) -> Number:
        pts = self.simplex_points(simplex)
        base = pts[0]
        rows = [[p[i] - base[i] for i in range(self.dim)] for p in pts[1:]]
        return abs(_det(rows, self.exact)) / math.factorial(self.dim)

    @property
    def volume(self) -> Number:
        if self._volume is None:
            self._volume = sum(
                (self.simplex_volume(s) for s in self.simplices),
                sp.Integer(0) if self.exact else 0.0,
            )
        return self._volume

    def facet_simplices(self, k: int) -> List[Tuple[int, ...]]:
        """Triangulation of facet k into (n-1)-simplices (empty for redundant facets)."""
        if k not in self._facet_simplices:
            if k not in self.faces:
                self._facet_simplices[k] = []
            else:
                verts = tuple(sorted(self.incidence[k]))
                self._facet_simplices[k] = self._triangulate(verts, self.dim - 1, frozenset({k}))
        return self._facet_simplices[k]

    def facet_simplex_measure(self, k: int, simplex: Tuple[int, ...]) -> Number:
        """Canonical (n-1)-measure |det[w_i - w_0, e]| / (n-1)! with nu . e = 1."""
        facet = self.facets[k]
        pts = self.simplex_points(simplex)
        base = pts[0]
        if facet.exact:
            norm2 = sum(sp.Rational(v) ** 2 for v in facet.normal)
            e = [sp.Rational(v) / norm2 for v in facet.normal]
        else:
            nu = facet.normal_array
            e = list(nu / float(nu @ nu))
        rows = [[p[i] - base[i] for i in range(self.dim)] for p in pts[1:]] + [e]
        exact = self.exact and facet.exact
        return abs(_det(rows, exact)) / math.factorial(self.dim - 1)

    def facet_measure(self, k: int) -> Number:
        """Canonical measure of facet k (before applying its sigma weight)."""
        zero = sp.Integer(0) if self.exact else 0.0
        return sum((self.facet_simplex_measure(k, s) for s in self.facet_simplices(k)), zero)

    @property
    def centroid(self) -> np.ndarray:
        """Volume centroid (float)."""
        total = 0.0
        acc = np.zeros(self.dim)
        verts = self.vertex_array
        for s in self.simplices:
            vol = float(self.simplex_volume(s))
            acc += vol * verts[list(s)].mean(axis=0)
            total += vol
        return acc / total

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Boolean mask of points satisfying every facet inequality within tol."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        normals, offsets = self._lp_arrays()
        return np.all(pts @ normals.T - offsets >= -tol, axis=1)

    def clip(self, gradient: Sequence[Number], constant: Number) -> Optional["Polytope"]:
        """
        Intersect with the half-space gradient . x + constant >= 0.

        The new face is a cut facet with weight 0. Exact inputs give an exact
        result.

        Returns:
            The clipped polytope of the same class, or None when the
            intersection has empty interior
        """
        exact = self.exact and all(is_exact(v) for v in gradient) and is_exact(constant)
        if exact:
            normal = tuple(parse_rational(v) for v in gradient)
            offset = -parse_rational(constant)
        else:
            normal = tuple(float(v) for v in gradient)
            offset = -float(constant)
        if all(v == 0 for v in normal):
            return self if float(constant) >= 0 else None
        values = [float(sum(n * x for n, x in zip(normal, v)) - offset) for v in self.vertices]
        scale = 1e-12 * (1.0 + max(abs(v) for v in values))
        if min(values) >= -scale:
            return self
        if max(values) <= scale:
            return None
        new_facets = [_copy_facet(f, exact) for f in self.facets]
        new_facets.append(Facet(normal, offset, cut=True))
        try:
            return self._rebuild(new_facets)
        except EmptyInterior:
            return None

    def _rebuild(self, facets: List[Facet]) -> "Polytope":
        return Polytope(facets, check_primitive=False, validate=False)

    def to_vertex_facets(self) -> List[Tuple[Tuple[int, ...], Number]]:
        """
        Rebuild the H-representation from the vertices alone.

        Returns:
            Sorted list of (primitive inward normal, offset) pairs, one per genuine facet
        """
        verts = self.vertices
        if self.dim == 1:
            lo, hi = verts[0][0], verts[-1][0]
            pairs = [((1,), lo), ((-1,), -hi)]
            return sorted(pairs, key=_facet_sort_key)
        hull = ConvexHull(self.vertex_array)
        groups: Dict[Tuple, set] = {}
        for simplex, eq in zip(hull.simplices, hull.equations):
            key = tuple(np.round(eq, 8))
            groups.setdefault(key, set()).update(int(i) for i in simplex)
        pairs = []
        centre = self.vertex_array.mean(axis=0)
        for members in groups.values():
            ids = sorted(members)
            pts = [verts[i] for i in ids]
            rows = [[p[j] - pts[0][j] for j in range(self.dim)] for p in pts[1:]]
            if self.exact:
                null = sp.Matrix(rows).nullspace()
                direction = [v for v in null[0]]
                normal, _ = rational_normal(direction)
                offset = sum(sp.Integer(a) * b for a, b in zip(normal, pts[0]))
                if float(sum(a * c for a, c in zip(normal, centre))) < float(offset):
                    normal = [-a for a in normal]
                    offset = -offset
                pairs.append((tuple(normal), offset))
            else:
                _, _, vt = np.linalg.svd(np.array(rows, dtype=float))
                nu = vt[-1]
                off = float(nu @ np.array(pts[0], dtype=float))
                if nu @ centre < off:
                    nu, off = -nu, -off
                pairs.append((tuple(nu), off))
        return sorted(pairs, key=_facet_sort_key)


def _facet_sort_key(pair: Tuple[Tuple, Number]) -> Tuple:
    normal, offset = pair
    return tuple(float(v) for v in normal) + (float(offset),)


def _copy_facet(facet: Facet, exact: bool) -> Facet:
    if exact:
        return Facet(facet.normal, facet.offset, facet.sigma_weight, cut=facet.cut)
    # demote to floats so mixed arithmetic stays in one field
    normal = tuple(float(v) for v in facet.normal) if facet.cut else facet.normal
    return Facet(normal, float(facet.offset), float(facet.sigma_weight), cut=facet.cut)


class MeasuredPolytope(Polytope):
    """
    A polytope with a boundary measure given by per-facet weights.

    Attributes:
        name: Optional label (from the polytope document)
        resolution: Default mesh resolution
        grading: Default mesh grading exponent
        density_mode: "constant" (S-hat problem) or "extremal" (relative problem)
    """

    def __init__(
        self,
        facets: Sequence[Facet],
        check_primitive: bool = True,
        validate: bool = True,
        name: Optional[str] = None,
        resolution: Optional[int] = None,
        grading: Optional[float] = None,
        density_mode: str = "constant",
    ):
        super().__init__(facets, check_primitive=check_primitive, validate=validate)
        self.name = name
        self.resolution = resolution
        self.grading = grading
        self.density_mode = density_mode

    def _rebuild(self, facets: List[Facet]) -> "MeasuredPolytope":
        return MeasuredPolytope(
            facets,
            check_primitive=False,
            validate=False,
            name=self.name,
            resolution=self.resolution,
            grading=self.grading,
            density_mode=self.density_mode,
        )

    @property
    def weights(self) -> List[Number]:
        return [f.sigma_weight for f in self.facets]

    @property
    def vol_sigma(self) -> Number:
        zero = sp.Integer(0) if self.exact else 0.0
        return sum(
            (self.facets[k].sigma_weight * self.facet_measure(k) for k in self.faces), zero
        )

    def scaled_weights(self, factor: Number) -> "MeasuredPolytope":
        """Copy with every sigma weight multiplied by a positive factor."""
        facets = [
            Facet(f.normal, f.offset, f.sigma_weight * factor, cut=f.cut) for f in self.facets
        ]
        return self._rebuild(facets)

    def to_document(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "dim": self.dim,
            "facets": [
                {k: v for k, v in f.to_dict().items() if k != "cut"}
                for f in self.facets if not f.cut
            ],
            "density": self.density_mode,
        }
        if self.name:
            doc["name"] = self.name
        mesh = {}
        if self.resolution is not None:
            mesh["resolution"] = self.resolution
        if self.grading is not None:
            mesh["grading"] = self.grading
        if mesh:
            doc["mesh"] = mesh
        return doc


def parse_polytope(spec: Union[Dict[str, Any], str, Path]) -> MeasuredPolytope:
    """
    Build a validated MeasuredPolytope from a polytope document.

    The document is a JSON object (or a path to one, or its text) with keys
    ``dim``, ``facets`` (each with ``normal``, ``offset`` and optional
    ``sigma_weight`` defaulting to 1), and optionally ``mesh``
    (``resolution``, ``grading``), ``name`` and ``density``. Rationals may be
    written as "p/q" strings.

    Args:
        spec: Parsed document, JSON text, or path to a JSON file

    Returns:
        MeasuredPolytope with derived vertices and triangulation

    Raises:
        MalformedDocument: Structural problems in the document
        NonPrimitiveNormal: A normal is not primitive (facet index attached)
        UnboundedPolytope: The inequalities do not bound a region
        EmptyInterior: The region is empty or lower dimensional

    Example:
        >>> mp = parse_polytope({"dim": 1, "facets": [
        ...     {"normal": [1], "offset": 0}, {"normal": [-1], "offset": -1}]})
        >>> len(mp.vertices)
        2
    """
    doc = _load_document(spec)
    if not isinstance(doc, dict):
        raise MalformedDocument("Polytope document must be a JSON object")
    if "dim" not in doc or "facets" not in doc:
        raise MalformedDocument("Polytope document needs 'dim' and 'facets'")
    dim = doc["dim"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise MalformedDocument(f"'dim' must be a positive integer, got {dim!r}")
    raw_facets = doc["facets"]
    if not isinstance(raw_facets, list) or len(raw_facets) < dim + 1:
        raise MalformedDocument(f"Need at least {dim + 1} facets in dimension {dim}")

    facets: List[Facet] = []
    for k, item in enumerate(raw_facets):
        if not isinstance(item, dict) or "normal" not in item or "offset" not in item:
            raise MalformedDocument(f"Facet {k} needs 'normal' and 'offset'")
        normal = item["normal"]
        if not isinstance(normal, list) or len(normal) != dim:
            raise MalformedDocument(f"Facet {k} normal must be a list of {dim} integers")
        try:
            ints = []
            for v in normal:
                q = parse_rational(v)
                if q.q != 1:
                    raise MalformedDocument(f"Facet {k} normal entry {v!r} is not an integer")
                ints.append(int(q))
            offset = parse_rational(item["offset"])
            weight = parse_rational(item.get("sigma_weight", 1))
        except MalformedDocument:
            raise
        except Exception as e:
            raise MalformedDocument(f"Facet {k}: {e}") from e
        if weight < 0:
            raise MalformedDocument(f"Facet {k} sigma_weight must be non-negative")
        facets.append(Facet(ints, offset, weight))

    mesh = doc.get("mesh", {}) or {}
    if not isinstance(mesh, dict):
        raise MalformedDocument("'mesh' must be an object")
    density = doc.get("density", "constant")
    if density not in ("constant", "extremal"):
        raise MalformedDocument(f"'density' must be 'constant' or 'extremal', got {density!r}")

    mp = MeasuredPolytope(
        facets,
        name=doc.get("name"),
        resolution=mesh.get("resolution"),
        grading=float(mesh["grading"]) if "grading" in mesh else None,
        density_mode=density,
    )
    logger.info(
        f"Parsed polytope {mp.name or '<unnamed>'}: dim={mp.dim}, "
        f"{len(mp.facets)} facets, {len(mp.vertices)} vertices, {len(mp.simplices)} simplices"
    )
    return mp


def _load_document(spec: Union[Dict[str, Any], str, Path]) -> Any:
    if isinstance(spec, dict):
        return spec
    if isinstance(spec, Path) or (isinstance(spec, str) and not spec.lstrip().startswith("{")):
        path = Path(spec)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise MalformedDocument(f"Cannot read polytope document {path}: {e}") from e
    else:
        text = spec
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedDocument(f"Invalid JSON: {e}") from e


def scalar_summary(mp: MeasuredPolytope) -> ScalarSummary:
    """
    Exact volumes Vol(P, d mu), Vol(dP, d sigma) and their quotient S-hat.

    Example:
        The standard triangle has vol_mu = 1/2, vol_sigma = 3, s_hat = 6.
    """
    return ScalarSummary(mp.volume, mp.vol_sigma)


# Moments

def _exponents(dim: int, degree: int) -> List[Tuple[int, ...]]:
    result = [tuple([0] * dim)]
    if degree >= 1:
        for i in range(dim):
            e = [0] * dim
            e[i] = 1
            result.append(tuple(e))
    if degree >= 2:
        for i in range(dim):
            for j in range(i, dim):
                e = [0] * dim
                e[i] += 1
                e[j] += 1
                result.append(tuple(e))
    return result


def _simplex_moments(
    points: List[Point], measure: Number, degree: int, dim: int
) -> Dict[Tuple[int, ...], Number]:
    """Closed-form monomial integrals of degree <= 2 over a simplex of any dimension."""
    m = len(points) - 1
    sums = [sum(p[i] for p in points) for i in range(dim)]
    out: Dict[Tuple[int, ...], Number] = {}
    for alpha in _exponents(dim, degree):
        idx = [i for i, a in enumerate(alpha) for _ in range(a)]
        if not idx:
            out[alpha] = measure
        elif len(idx) == 1:
            out[alpha] = measure * sums[idx[0]] / (m + 1)
        else:
            i, j = idx
            cross = sum(p[i] * p[j] for p in points)
            out[alpha] = measure * (cross + sums[i] * sums[j]) / ((m + 1) * (m + 2))
    return out


class MomentTable:
    """
    Monomial moments of a measured polytope up to degree 2.

    Attributes:
        interior: exponent tuple -> integral over P of x^alpha d mu
        boundary: exponent tuple -> integral over dP of x^alpha d sigma
        degree: highest total degree present
    """

    def __init__(self, interior: Dict, boundary: Dict, degree: int):
        self.interior = interior
        self.boundary = boundary
        self.degree = degree

    def to_dict(self) -> Dict[str, Any]:
        def fmt(table: Dict) -> Dict[str, Any]:
            return {"".join(str(a) for a in k): _render(v) for k, v in table.items()}
        return {"interior": fmt(self.interior), "boundary": fmt(self.boundary)}


@validate_range("degree", 0, 2, error=DegreeUnsupported)
def moments(mp: MeasuredPolytope, degree: int = 2) -> MomentTable:
    """
    Exact monomial moments over P (d mu) and over dP (d sigma) up to ``degree``.

    Args:
        mp: Measured polytope
        degree: Highest total degree, at most 2

    Returns:
        MomentTable with rational entries for exact polytopes

    Raises:
        DegreeUnsupported: For degree > 2
    """
    zero = sp.Integer(0) if mp.exact else 0.0
    keys = _exponents(mp.dim, degree)
    interior = {k: zero for k in keys}
    boundary = {k: zero for k in keys}
    for s in mp.simplices:
        local = _simplex_moments(mp.simplex_points(s), mp.simplex_volume(s), degree, mp.dim)
        for k, v in local.items():
            interior[k] += v
    for k_facet in mp.faces:
        weight = mp.facets[k_facet].sigma_weight
        if weight == 0:
            continue
        for s in mp.facet_simplices(k_facet):
            measure = weight * mp.facet_simplex_measure(k_facet, s)
            local = _simplex_moments(mp.simplex_points(s), measure, degree, mp.dim)
            for k, v in local.items():
                boundary[k] += v
    return MomentTable(interior, boundary, degree)


AffineData = Tuple[Sequence[Number], Number]


def _affine_integral(table: Dict, dim: int, gradient: Sequence[Number], constant: Number) -> Number:
    total = constant * table[tuple([0] * dim)]
    for i in range(dim):
        e = [0] * dim
        e[i] = 1
        total += gradient[i] * table[tuple(e)]
    return total


def _product_integral(table: Dict, dim: int, a: AffineData, b: AffineData) -> Number:
    (ga, ca), (gb, cb) = a, b
    total = ca * cb * table[tuple([0] * dim)]
    for i in range(dim):
        e = [0] * dim
        e[i] = 1
        total += (ca * gb[i] + cb * ga[i]) * table[tuple(e)]
    for i in range(dim):
        for j in range(dim):
            e = [0] * dim
            e[i] += 1
            e[j] += 1
            total += ga[i] * gb[j] * table[tuple(e)]
    return total


def _field(data: AffineData, exact: bool) -> AffineData:
    gradient, constant = data
    if exact:
        return [parse_rational(v) for v in gradient], parse_rational(constant)
    return [float(v) for v in gradient], float(constant)


def region_integral(
    mp: MeasuredPolytope,
    f: AffineData,
    density: Optional[AffineData] = None,
) -> Tuple[Number, Number]:
    """
    Exact integrals of an affine function over a (possibly clipped) measured polytope.

    Args:
        mp: Region of integration; cut facets carry no boundary measure
        f: Affine integrand as (gradient, constant)
        density: Affine density g as (gradient, constant); None means g = 1

    Returns:
        (integral of g f d mu over mp, integral of f d sigma over its boundary),
        rational when every input is rational
    """
    pieces = [f] + ([density] if density is not None else [])
    exact = mp.exact and all(
        all(is_exact(v) for v in g) and is_exact(c) for g, c in pieces
    )
    f_data = _field(f, exact)
    table = moments(mp, 2 if density is not None else 1)
    if density is None:
        interior = _affine_integral(table.interior, mp.dim, *f_data)
    else:
        interior = _product_integral(table.interior, mp.dim, _field(density, exact), f_data)
    boundary = _affine_integral(table.boundary, mp.dim, *f_data)
    if not exact:
        return float(interior), float(boundary)
    return interior, boundary


def product_integral(mp: MeasuredPolytope, a: AffineData, b: AffineData) -> Number:
    """Integral of the product of two affine functions over mp (d mu)."""
    exact = mp.exact and all(all(is_exact(v) for v in g) and is_exact(c) for g, c in (a, b))
    table = moments(mp, 2)
    value = _product_integral(table.interior, mp.dim, _field(a, exact), _field(b, exact))
    return value if exact else float(value)
