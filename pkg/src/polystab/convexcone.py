"""
Discrete convex functions on a mesh.

A ConvexGridFunction stores node values and node subgradients that satisfy
the pairwise supporting-plane system f_i >= f_j + s_j . (x_i - x_j), so its
PL extension max_j [f_j + s_j . (x - x_j)] is convex on all of R^n.

The same system, written over the stacked unknowns (f, s), is the cone the
destabilizer optimises over. Rows are built for any subset of ordered node
pairs so callers can activate them lazily.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.optimize import linprog

from .core.config_manager import get_config_manager
from .core.exceptions import DegenerateNodeSet, InfeasibleStart
from .core.validation import validate_positive
from .functionals import AffineFunction, PLConvexFunction
from .geometry import MeasuredPolytope
from .quadrature import Mesh, Quadrature, build_quadrature

logger = logging.getLogger(__name__)


class SimpleCrease:
    """
    The simple crease function max{h, 0}.

    Attributes:
        h: Affine part; the crease is the hyperplane {h = 0}
    """

    def __init__(self, h: AffineFunction):
        self.h = h

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.maximum(self.h(points), 0.0)

    def as_function(self) -> PLConvexFunction:
        return PLConvexFunction.crease(self.h)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": "crease", "h": self.h.to_dict()}

    def __repr__(self) -> str:
        return f"SimpleCrease(max({self.h}, 0))"


class ConvexGridFunction:
    """
    Node values and subgradients of a discrete convex function.

    Attributes:
        values: (N,) node values f_i
        subgradients: (N, n) node subgradients s_i
        nodes: (N, n) node coordinates
        base_point: Interior normalization point x0
        analytic: Optional PLConvexFunction the values were sampled from
    """

    def __init__(
        self,
        values: np.ndarray,
        subgradients: np.ndarray,
        nodes: np.ndarray,
        base_point: Optional[np.ndarray] = None,
        analytic: Optional[PLConvexFunction] = None,
    ):
        self.values = np.asarray(values, dtype=float)
        self.nodes = np.asarray(nodes, dtype=float)
        self.subgradients = np.asarray(subgradients, dtype=float).reshape(self.nodes.shape)
        self.base_point = (
            np.asarray(base_point, dtype=float) if base_point is not None
            else self.nodes.mean(axis=0)
        )
        self.analytic = analytic

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def extension(self, points: np.ndarray) -> np.ndarray:
        """PL convex extension max_j [f_j + s_j . (x - x_j)] at points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        offsets = self.values - np.einsum("ij,ij->i", self.subgradients, self.nodes)
        planes = pts @ self.subgradients.T + offsets
        return planes.max(axis=1)

    def supporting_violation(self) -> float:
        """Largest violation of the pairwise supporting-plane system (0 when consistent)."""
        planes = self.extension(self.nodes)
        return float(np.max(planes - self.values))

    def supporting_plane(self, point: np.ndarray) -> AffineFunction:
        """Active supporting plane of the extension at a point (lowest index on ties)."""
        pt = np.asarray(point, dtype=float)
        close = np.linalg.norm(self.nodes - pt, axis=1)
        j = int(np.argmin(close))
        if close[j] > 1e-12:
            planes = self.values + self.subgradients @ pt - np.einsum(
                "ij,ij->i", self.subgradients, self.nodes
            )
            top = planes.max()
            j = int(np.flatnonzero(planes >= top - 1e-12 * (1.0 + abs(top)))[0])
        s = self.subgradients[j]
        return AffineFunction(s.tolist(), float(self.values[j] - s @ self.nodes[j]))

    def plus_affine(self, g: AffineFunction) -> "ConvexGridFunction":
        analytic = self.analytic.plus_affine(g) if self.analytic is not None else None
        return ConvexGridFunction(
            self.values + g(self.nodes),
            self.subgradients + g.grad_array,
            self.nodes,
            self.base_point,
            analytic,
        )

    def scaled(self, factor: float) -> "ConvexGridFunction":
        analytic = self.analytic.scaled(factor) if self.analytic is not None else None
        return ConvexGridFunction(
            factor * self.values, factor * self.subgradients, self.nodes, self.base_point, analytic
        )

    def to_frame(self) -> pd.DataFrame:
        data: Dict[str, Any] = {}
        for i in range(self.dim):
            data[f"x{i}"] = self.nodes[:, i]
        data["value"] = self.values
        for i in range(self.dim):
            data[f"s{i}"] = self.subgradients[:, i]
        return pd.DataFrame(data)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, base_point: Optional[np.ndarray] = None) -> "ConvexGridFunction":
        dim = sum(1 for c in frame.columns if c.startswith("x"))
        nodes = frame[[f"x{i}" for i in range(dim)]].to_numpy(dtype=float)
        subs = frame[[f"s{i}" for i in range(dim)]].to_numpy(dtype=float)
        return cls(frame["value"].to_numpy(dtype=float), subs, nodes, base_point)


def is_convex_extendable(
    values: np.ndarray, nodes: np.ndarray, tol: Optional[float] = None
) -> Tuple[bool, Union[np.ndarray, Tuple[int, int]]]:
    """
    Decide whether node values extend to a convex function.

    Solves the linear program min t subject to
    f_j + s_j . (x_i - x_j) - f_i <= t for every ordered pair (i, j), t >= 0.
    The values are extendable exactly when the optimum is within tolerance.

    Args:
        values: (N,) node values
        nodes: (N, n) node coordinates
        tol: Feasibility tolerance relative to the value scale
            (default: config ``cone/feasibility_tol``)

    Returns:
        (True, subgradients) on success, (False, (i, j)) with the most violated
        pair otherwise: node i lies below the supporting plane of node j

    Raises:
        DegenerateNodeSet: Fewer than n+1 affinely independent nodes
        InfeasibleStart: If the linear program fails

    Example:
        >>> ok, witness = is_convex_extendable(np.array([0.0, 1.0, 0.0]),
        ...                                    np.array([[0.0], [0.5], [1.0]]))
        >>> ok, 1 in witness
        (False, True)
    """
    f = np.asarray(values, dtype=float)
    x = np.atleast_2d(np.asarray(nodes, dtype=float))
    count, n = x.shape
    if count < n + 1 or np.linalg.matrix_rank(x[1:] - x[0]) < n:
        raise DegenerateNodeSet(f"{count} nodes do not span dimension {n}")
    if tol is None:
        tol = float(get_config_manager().get("cone/feasibility_tol", 1e-9))
    tol = tol * max(1.0, float(np.abs(f).max()))

    rows = supporting_plane_rows(x, all_pairs(count))
    slack = sparse.csr_matrix(-np.ones((rows.shape[0], 1)))
    a_ub = sparse.hstack([-rows[:, count:], slack]).tocsr()
    b_ub = rows[:, :count] @ f
    c = np.zeros(count * n + 1)
    c[-1] = 1.0
    bounds = [(None, None)] * (count * n) + [(0.0, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        logger.error(f"Convex extendability LP failed: {res.message}")
        raise InfeasibleStart(f"Convex extendability LP failed: {res.message}")

    t = float(res.x[-1])
    subgradients = res.x[:-1].reshape(count, n)
    if t <= tol:
        return True, subgradients
    witness = _envelope_witness(f, x)
    logger.debug(f"Values not extendable: max violation {t:.3g}, witness pair {witness}")
    return False, witness


def _envelope_witness(f: np.ndarray, x: np.ndarray) -> Tuple[int, int]:
    """Node furthest above the lower convex envelope, paired with its main support."""
    count = len(f)
    a_eq = np.vstack([x.T, np.ones(count)])
    best_gap, best_pair = -np.inf, (0, 1)
    for j in range(count):
        res = linprog(f, A_eq=a_eq, b_eq=np.append(x[j], 1.0), bounds=[(0.0, None)] * count,
                      method="highs")
        if res.status != 0:
            continue
        gap = f[j] - res.fun
        if gap > best_gap:
            lam = res.x.copy()
            lam[j] = -1.0
            best_gap, best_pair = gap, (int(np.argmax(lam)), j)
    return best_pair


def normalize(f: ConvexGridFunction) -> ConvexGridFunction:
    """
    Subtract the supporting plane at the base point.

    The result is convex, non-negative and vanishes at the base point.
    Applying it twice changes nothing.

    Example:
        x^2 on [0, 1] with base point 1/2 becomes (x - 1/2)^2.
    """
    plane = f.supporting_plane(f.base_point)
    return f.plus_affine(-plane)


def all_pairs(count: int) -> np.ndarray:
    """Every ordered pair (i, j) with i != j, as a (count (count - 1), 2) array."""
    i, j = np.nonzero(~np.eye(count, dtype=bool))
    return np.column_stack([i, j])


def mesh_edge_pairs(mesh: Mesh) -> np.ndarray:
    """Ordered pairs along mesh edges, both directions."""
    return np.vstack([mesh.edges, mesh.edges[:, ::-1]])


def supporting_plane_rows(nodes: np.ndarray, pairs: np.ndarray) -> sparse.csr_matrix:
    """
    Rows f_i - f_j - s_j . (x_i - x_j) >= 0 over the stacked unknowns (f, s).

    Column k < N is f_k; column N + j n + m is the m-th component of s_j.

    Args:
        nodes: (N, n) node coordinates
        pairs: (M, 2) ordered pairs (i, j)

    Returns:
        Sparse (M, N (n + 1)) matrix
    """
    x = np.atleast_2d(np.asarray(nodes, dtype=float))
    count, n = x.shape
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    m = len(pairs)
    i, j = pairs[:, 0], pairs[:, 1]
    d = x[i] - x[j]
    rows = np.repeat(np.arange(m), n + 2)
    cols = np.column_stack([i, j, count + j[:, None] * n + np.arange(n)])
    vals = np.column_stack([np.ones(m), -np.ones(m), -d])
    return sparse.csr_matrix(
        (vals.ravel(), (rows, cols.ravel())), shape=(m, count * (n + 1))
    )


def pairwise_violation(values: np.ndarray, subgradients: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """(N, N) matrix of f_j + s_j . (x_i - x_j) - f_i; zero on the diagonal."""
    x = np.atleast_2d(np.asarray(nodes, dtype=float))
    s = np.asarray(subgradients, dtype=float).reshape(x.shape)
    offsets = values - np.einsum("ij,ij->i", s, x)
    planes = x @ s.T + offsets
    return planes - values[:, None]


def nodal_subgradients(values: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Averages of the incident element gradients of the P1 interpolant."""
    grads = mesh.element_gradients(values)
    sums = np.zeros((mesh.size, mesh.dim))
    counts = np.zeros(mesh.size)
    for e, elem in enumerate(mesh.elements):
        sums[elem] += grads[e]
        counts[elem] += 1
    return sums / counts[:, None]


def grid_function_from_values(
    values: np.ndarray, quad: Quadrature, base_point: Optional[np.ndarray] = None
) -> ConvexGridFunction:
    """
    Wrap nodal values as a ConvexGridFunction.

    Node subgradients are the averages of the incident element gradients,
    which are subgradients of a convex P1 interpolant.
    """
    if base_point is None:
        base_point = quad.mp.centroid
    subgradients = nodal_subgradients(values, quad.mesh)
    return ConvexGridFunction(values, subgradients, quad.mesh.nodes, base_point)


def _random_interior_point(vertices: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    weights = rng.dirichlet(np.ones(len(vertices)))
    return weights @ vertices


def _random_direction(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _random_crease(vertices: np.ndarray, rng: np.random.Generator) -> PLConvexFunction:
    p = _random_interior_point(vertices, rng)
    theta = _random_direction(vertices.shape[1], rng)
    h = AffineFunction(theta.tolist(), float(-theta @ p))
    return PLConvexFunction.crease(h)


def _random_max(vertices: np.ndarray, rng: np.random.Generator) -> PLConvexFunction:
    k = int(rng.integers(2, 6))
    pieces = []
    for _ in range(k):
        p = _random_interior_point(vertices, rng)
        g = rng.normal(size=vertices.shape[1])
        pieces.append(AffineFunction(g.tolist(), float(-g @ p)))
    return PLConvexFunction([(1.0, pieces)], dim=vertices.shape[1], kind="max")


def _random_combination(vertices: np.ndarray, rng: np.random.Generator) -> PLConvexFunction:
    terms = []
    for _ in range(2):
        part = _random_crease(vertices, rng) if rng.random() < 0.5 else _random_max(vertices, rng)
        weight = float(rng.uniform(0.1, 1.0))
        terms.extend((weight * c, pieces) for c, pieces in part.terms)
    return PLConvexFunction(terms, dim=vertices.shape[1], kind="combination")


def battery_member(
    analytic: PLConvexFunction, quad: Quadrature, base_point: np.ndarray
) -> Optional[ConvexGridFunction]:
    """Sample, normalize and scale one analytic convex function on the mesh."""
    nodes = quad.mesh_nodes
    values = analytic(nodes)
    subgradients = np.array([analytic.gradient(x) for x in nodes])
    f = normalize(ConvexGridFunction(values, subgradients, nodes, base_point, analytic))
    boundary = quad.mesh.integrate_boundary(f.values)
    if boundary > 1e-14:
        f = f.scaled(1.0 / boundary)
    if not np.any(np.abs(f.values) > 1e-12):
        return None
    return f


@validate_positive("count")
def sample_cone(
    mp: MeasuredPolytope,
    count: int,
    seed: int = 42,
    quad: Optional[Quadrature] = None,
    base_point: Optional[np.ndarray] = None,
) -> List[ConvexGridFunction]:
    """
    Deterministic battery of normalized convex test functions.

    Members are simple creases through random interior points, maxima of two
    to five random affine functions, and non-negative combinations of those.
    Each is normalized at the base point and scaled so that its boundary
    integral is 1 when that integral is nonzero. The first member is always a
    crease. In 1-D the creases are max(x - t, 0) and max(t - x, 0).

    Args:
        mp: Measured polytope
        count: Number of members (>= 1)
        seed: Random seed
        quad: Quadrature whose mesh nodes carry the values (default: built from mp)
        base_point: Normalization point (default: centroid of mp)

    Returns:
        List of ConvexGridFunction, each carrying its analytic PLConvexFunction
    """
    if quad is None:
        quad = build_quadrature(mp)
    if base_point is None:
        base_point = mp.centroid
    rng = np.random.default_rng(seed)
    vertices = mp.vertex_array
    makers = (_random_crease, _random_max, _random_combination)
    battery: List[ConvexGridFunction] = []
    attempts = 0
    while len(battery) < count and attempts < 20 * count:
        maker = makers[0] if not battery else makers[int(rng.integers(0, 3))]
        attempts += 1
        member = battery_member(maker(vertices, rng), quad, base_point)
        if member is not None:
            battery.append(member)
    logger.debug(f"Sampled {len(battery)} cone members with seed {seed}")
    return battery


def norm_inequality_constant(
    battery: Sequence[ConvexGridFunction], quad: Quadrature
) -> Tuple[float, float]:
    """
    Empirical constant C in ||f|| <= C ||f - pi(f)|| over normalized functions.

    Returns:
        (C, smallest ||f - pi(f)|| / ||f||) over the battery
    """
    from .functionals import affine_basis

    mesh = quad.mesh
    basis = affine_basis(quad)
    gram = basis.T @ (mesh.mass @ basis)
    worst_ratio = np.inf
    constant = 0.0
    for f in battery:
        norm = mesh.norm(f.values)
        if norm <= 1e-14:
            continue
        coef = np.linalg.solve(gram, basis.T @ (mesh.mass @ f.values))
        residual = mesh.norm(f.values - basis @ coef)
        ratio = residual / norm
        worst_ratio = min(worst_ratio, ratio)
        constant = max(constant, norm / residual if residual > 0 else np.inf)
    logger.info(f"Norm inequality constant over {len(battery)} functions: C = {constant:.4g}")
    return constant, float(worst_ratio)
