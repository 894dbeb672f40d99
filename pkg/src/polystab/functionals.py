"""
Linear functionals on measured polytopes.

L_A(f) = boundary integral of f d sigma - integral of A f d mu, the extremal
affine function A, the L2 projection onto affine functions, and the
flow-side functionals (relative Mabuchi functional, Calabi energy).

Functions are accepted in three forms:
- nodal arrays on the quadrature's mesh (P1 interpolants, integrated exactly)
- callables evaluated at the quadrature nodes
- PLConvexFunction, which can also be integrated exactly region by region
"""

import logging
import math
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp

from .core.exceptions import NodeEvaluationFailure, SingularMomentMatrix, ValidationError
from .core.number_utils import is_exact, parse_rational
from .geometry import MeasuredPolytope, moments, product_integral, region_integral
from .quadrature import Quadrature

logger = logging.getLogger(__name__)

Number = Any


class AffineFunction:
    """
    An affine function x -> gradient . x + constant.

    Coefficients stay exact (sympy Rationals) when every input is rational;
    arithmetic mixing exact and float coefficients falls back to floats.

    Attributes:
        gradient: Tuple of coefficients
        constant: Constant term
        exact: True when all coefficients are rational
    """

    def __init__(self, gradient: Sequence[Number], constant: Number = 0):
        values = list(gradient) + [constant]
        self.exact = all(is_exact(v) for v in values)
        if self.exact:
            self.gradient: Tuple[Number, ...] = tuple(parse_rational(v) for v in gradient)
            self.constant: Number = parse_rational(constant)
        else:
            self.gradient = tuple(float(v) for v in gradient)
            self.constant = float(constant)

    @classmethod
    def constant_function(cls, value: Number, dim: int) -> "AffineFunction":
        return cls([0] * dim, value)

    @property
    def dim(self) -> int:
        return len(self.gradient)

    @property
    def grad_array(self) -> np.ndarray:
        return np.array([float(v) for v in self.gradient])

    @property
    def constant_float(self) -> float:
        return float(self.constant)

    @property
    def data(self) -> Tuple[Tuple[Number, ...], Number]:
        return self.gradient, self.constant

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self.grad_array + self.constant_float

    def evaluate_exact(self, point: Sequence[Number]) -> Number:
        return sum(g * x for g, x in zip(self.gradient, point)) + self.constant

    def _combine(self, other: "AffineFunction", sign: int) -> "AffineFunction":
        if self.exact and other.exact:
            grad = [a + sign * b for a, b in zip(self.gradient, other.gradient)]
            return AffineFunction(grad, self.constant + sign * other.constant)
        grad = self.grad_array + sign * other.grad_array
        return AffineFunction(grad.tolist(), self.constant_float + sign * other.constant_float)

    def __add__(self, other: "AffineFunction") -> "AffineFunction":
        return self._combine(other, 1)

    def __sub__(self, other: "AffineFunction") -> "AffineFunction":
        return self._combine(other, -1)

    def __mul__(self, factor: Number) -> "AffineFunction":
        if self.exact and is_exact(factor):
            q = parse_rational(factor)
            return AffineFunction([q * g for g in self.gradient], q * self.constant)
        f = float(factor)
        return AffineFunction((f * self.grad_array).tolist(), f * self.constant_float)

    __rmul__ = __mul__

    def __neg__(self) -> "AffineFunction":
        return self * -1

    def to_float(self) -> "AffineFunction":
        return AffineFunction(self.grad_array.tolist(), self.constant_float)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "gradient": self.grad_array.tolist(),
            "constant": self.constant_float,
        }
        if self.exact:
            out["exact"] = {
                "gradient": [str(g) for g in self.gradient],
                "constant": str(self.constant),
            }
        return out

    def __repr__(self) -> str:
        terms = " + ".join(f"{g}*x{i}" for i, g in enumerate(self.gradient))
        return f"AffineFunction({terms} + {self.constant})"


class FunctionalValue:
    """
    Value of L_A(f) with its two parts.

    Attributes:
        boundary_term: Integral of f d sigma over the boundary
        interior_term: Integral of A f d mu
        value: boundary_term - interior_term
    """

    def __init__(self, boundary_term: Number, interior_term: Number):
        self.boundary_term = boundary_term
        self.interior_term = interior_term
        self.value = boundary_term - interior_term

    def __float__(self) -> float:
        return float(self.value)

    def to_dict(self) -> Dict[str, float]:
        return {
            "boundary_term": float(self.boundary_term),
            "interior_term": float(self.interior_term),
            "value": float(self.value),
        }


Density = Union[Number, AffineFunction, np.ndarray]


def density_nodal(density: Density, quad: Quadrature) -> np.ndarray:
    """Nodal values of a density (scalar, affine function or nodal array) on the mesh."""
    nodes = quad.mesh_nodes
    if isinstance(density, AffineFunction):
        return density(nodes)
    if isinstance(density, np.ndarray):
        if density.shape != (len(nodes),):
            raise NodeEvaluationFailure(
                f"Gridded density has shape {density.shape}, expected ({len(nodes)},)"
            )
        return density
    return np.full(len(nodes), float(density))


def as_affine(density: Density, dim: int) -> Optional[AffineFunction]:
    """The density as an AffineFunction, or None when it is gridded."""
    if isinstance(density, AffineFunction):
        return density
    if isinstance(density, np.ndarray):
        return None
    return AffineFunction.constant_function(density if is_exact(density) else float(density), dim)


def _evaluate(f: Callable[[np.ndarray], np.ndarray], points: np.ndarray, where: str) -> np.ndarray:
    if len(points) == 0:
        return np.zeros(0)
    try:
        values = np.asarray(f(points), dtype=float).reshape(-1)
    except Exception as e:
        logger.error(f"Evaluating function at {where} nodes failed: {e}")
        raise NodeEvaluationFailure(f"Function evaluation failed at {where} nodes: {e}") from e
    if values.shape != (len(points),) or not np.all(np.isfinite(values)):
        raise NodeEvaluationFailure(f"Function returned non-finite or misshaped values at {where} nodes")
    return values


def eval_L(density: Density, f: Any, quad: Quadrature) -> FunctionalValue:
    """
    Evaluate L_A(f) = boundary integral of f d sigma - integral of A f d mu.

    Nodal arrays (and objects exposing ``values`` on the mesh nodes) are
    treated as P1 functions and integrated exactly with the mass matrix and
    the lumped boundary weights. Callables are sampled at the quadrature
    nodes.

    Args:
        density: Constant, AffineFunction or nodal array on the mesh
        f: Nodal array, grid function or callable of an (k, n) point array
        quad: Quadrature of the polytope

    Returns:
        FunctionalValue

    Raises:
        NodeEvaluationFailure: If f cannot be evaluated at a node

    Example:
        On [0, 1] with A = 2 and f = max(2x - 1, 0), L_A(f) = 1 - 2 * 1/4 = 1/2.
    """
    mesh = quad.mesh
    if hasattr(f, "values") and isinstance(getattr(f, "values"), np.ndarray):
        f = f.values
    if isinstance(f, np.ndarray):
        if f.shape != (mesh.size,):
            raise NodeEvaluationFailure(f"Nodal values have shape {f.shape}, expected ({mesh.size},)")
        a_nodal = density_nodal(density, quad)
        return FunctionalValue(mesh.integrate_boundary(f), mesh.inner(a_nodal, f))
    boundary = _evaluate(f, quad.boundary_nodes, "boundary")
    interior = _evaluate(f, quad.interior_nodes, "interior")
    a_interior = quad.to_interior(density_nodal(density, quad))
    return FunctionalValue(
        quad.integrate_boundary(boundary),
        quad.integrate_interior(a_interior * interior),
    )


def _unit_exponents(dim: int) -> List[Tuple[int, ...]]:
    out = [tuple([0] * dim)]
    for i in range(dim):
        e = [0] * dim
        e[i] = 1
        out.append(tuple(e))
    return out


def extremal_affine(mp: MeasuredPolytope) -> AffineFunction:
    """
    The unique affine A with L_A(f) = 0 for every affine f.

    Solves the degree-one moment system
    sum_b (integral of x^a x^b d mu) c_b = integral of x^a d sigma in exact
    arithmetic for rational polytopes.

    Raises:
        SingularMomentMatrix: If the Gram matrix is singular

    Example:
        On [0, 1] with weights (0, 1): A(x) = 6x - 2.
    """
    n = mp.dim
    table = moments(mp, 2)
    basis = _unit_exponents(n)

    def add(a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
        return tuple(x + y for x, y in zip(a, b))

    gram = [[table.interior[add(a, b)] for b in basis] for a in basis]
    rhs = [table.boundary[a] for a in basis]
    if mp.exact:
        matrix = sp.Matrix(gram)
        if matrix.det() == 0:
            raise SingularMomentMatrix("Degree-one moment matrix is singular")
        coef = list(matrix.LUsolve(sp.Matrix(rhs)))
    else:
        matrix = np.array(gram, dtype=float)
        if abs(np.linalg.det(matrix)) < 1e-300 or np.linalg.cond(matrix) > 1e14:
            raise SingularMomentMatrix("Degree-one moment matrix is numerically singular")
        coef = np.linalg.solve(matrix, np.array(rhs, dtype=float)).tolist()
    result = AffineFunction(coef[1:], coef[0])
    logger.debug(f"Extremal affine function: {result}")
    return result


def discrete_extremal_affine(
    weights: np.ndarray, nodes: np.ndarray, boundary: np.ndarray
) -> AffineFunction:
    """
    Extremal affine function of a discrete measure pair.

    Args:
        weights: Node weights of the interior measure
        nodes: (N, n) node coordinates
        boundary: Node weights of the boundary measure

    Returns:
        Affine A with sum(boundary * g) = sum(weights * A * g) for every affine g
    """
    basis = np.hstack([np.ones((len(nodes), 1)), np.asarray(nodes, dtype=float)])
    gram = basis.T @ (weights[:, None] * basis)
    rhs = basis.T @ boundary
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as e:
        logger.error(f"Discrete moment matrix is singular: {e}")
        raise SingularMomentMatrix(f"Discrete moment matrix is singular: {e}") from e
    return AffineFunction(coef[1:].tolist(), float(coef[0]))


def affine_basis(quad: Quadrature) -> np.ndarray:
    """(N, n+1) nodal values of 1, x_1, ..., x_n."""
    nodes = quad.mesh_nodes
    return np.hstack([np.ones((len(nodes), 1)), nodes])


def project_affine(f: Any, quad: Quadrature) -> AffineFunction:
    """
    L2 projection of a gridded field onto affine functions.

    The residual f - pi(f) is orthogonal to 1, x_1, ..., x_n in the mesh's
    P1 inner product.

    Example:
        f = x^2 on [0, 1] projects to x - 1/6 (up to interpolation error).
    """
    values = f.values if hasattr(f, "values") else f
    if callable(values):
        values = _evaluate(values, quad.mesh_nodes, "mesh")
    basis = affine_basis(quad)
    mass = quad.mesh.mass
    gram = basis.T @ (mass @ basis)
    rhs = basis.T @ (mass @ np.asarray(values, dtype=float))
    coef = np.linalg.solve(gram, rhs)
    return AffineFunction(coef[1:].tolist(), float(coef[0]))


class PLConvexFunction:
    """
    f(x) = sum_t c_t * max_j a_tj(x) + affine(x) with every c_t >= 0.

    Convex by construction. Integrals over a measured polytope are computed
    exactly on the linear regions of f, obtained by clipping.

    Attributes:
        terms: List of (coefficient, list of AffineFunction) pairs
        affine: Affine part
        kind: Short label of how the function was generated
    """

    def __init__(
        self,
        terms: Sequence[Tuple[Number, Sequence[AffineFunction]]],
        affine: Optional[AffineFunction] = None,
        dim: Optional[int] = None,
        kind: str = "pl",
    ):
        self.terms = [(c, list(pieces)) for c, pieces in terms]
        if dim is None:
            dim = self.terms[0][1][0].dim if self.terms else affine.dim
        self.dim = dim
        self.affine = affine if affine is not None else AffineFunction([0] * dim, 0)
        self.kind = kind
        self._regions: Dict[int, List[Tuple[MeasuredPolytope, AffineFunction]]] = {}

    @classmethod
    def crease(cls, h: AffineFunction) -> "PLConvexFunction":
        """The simple crease function max{h, 0}."""
        return cls([(1, [h, AffineFunction([0] * h.dim, 0)])], dim=h.dim, kind="crease")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        total = self.affine(pts)
        for c, pieces in self.terms:
            total = total + float(c) * np.max([a(pts) for a in pieces], axis=0)
        return total

    def gradient(self, point: Sequence[float]) -> np.ndarray:
        """A subgradient at a point (first maximizing piece of each term)."""
        pt = np.atleast_2d(np.asarray(point, dtype=float))
        grad = self.affine.grad_array.copy()
        for c, pieces in self.terms:
            values = [a(pt)[0] for a in pieces]
            grad += float(c) * pieces[int(np.argmax(values))].grad_array
        return grad

    def supporting_plane(self, point: Sequence[float]) -> AffineFunction:
        """Affine function touching f from below at a point."""
        pt = np.asarray(point, dtype=float)
        s = self.gradient(pt)
        value = float(self(pt)[0])
        return AffineFunction(s.tolist(), value - float(s @ pt))

    def plus_affine(self, g: AffineFunction) -> "PLConvexFunction":
        return PLConvexFunction(self.terms, self.affine + g, self.dim, self.kind)

    def normalized(self, base_point: Sequence[float]) -> "PLConvexFunction":
        """f minus its supporting plane at base_point: non-negative, zero at base_point."""
        return self.plus_affine(-self.supporting_plane(base_point))

    def scaled(self, factor: float) -> "PLConvexFunction":
        terms = [(float(c) * factor, pieces) for c, pieces in self.terms]
        return PLConvexFunction(terms, self.affine * factor, self.dim, self.kind)

    def linear_regions(self, mp: MeasuredPolytope) -> List[Tuple[MeasuredPolytope, AffineFunction]]:
        """Subpolytopes of mp on which f is affine, with the affine function on each."""
        key = id(mp)
        if key in self._regions:
            return self._regions[key]
        regions: List[Tuple[MeasuredPolytope, AffineFunction]] = [(mp, self.affine)]
        for c, pieces in self.terms:
            refined = []
            for region, value in regions:
                for j, piece in enumerate(pieces):
                    cell: Optional[MeasuredPolytope] = region
                    for k, other in enumerate(pieces):
                        if k == j or cell is None:
                            continue
                        diff = piece - other
                        if k < j and _is_zero(diff):
                            cell = None
                            continue
                        cell = cell.clip(diff.gradient, diff.constant)
                    if cell is not None:
                        refined.append((cell, value + piece * c))
            regions = refined
        self._regions[key] = regions
        return regions

    def exact_L(self, mp: MeasuredPolytope, density: Union[Number, AffineFunction]) -> FunctionalValue:
        """L_A(f) by exact integration over the linear regions of f."""
        g = as_affine(density, mp.dim)
        boundary, interior = 0, 0
        for region, value in self.linear_regions(mp):
            inner, bnd = region_integral(region, value.data, g.data)
            boundary += bnd
            interior += inner
        return FunctionalValue(boundary, interior)

    def boundary_integral(self, mp: MeasuredPolytope) -> Number:
        return sum(region_integral(region, value.data)[1] for region, value in self.linear_regions(mp))

    def exact_inner(self, mp: MeasuredPolytope, g: AffineFunction) -> Number:
        """Integral of f * g d mu for affine g."""
        return sum(product_integral(region, value.data, g.data) for region, value in self.linear_regions(mp))

    def exact_norm(self, mp: MeasuredPolytope) -> float:
        total = sum(
            float(product_integral(region, value.data, value.data))
            for region, value in self.linear_regions(mp)
        )
        return math.sqrt(max(total, 0.0))

    def exact_projection(self, mp: MeasuredPolytope) -> AffineFunction:
        """L2(d mu) projection of f onto affine functions, by exact integration."""
        n = mp.dim
        basis = [AffineFunction([0] * n, 1)] + [
            AffineFunction([1 if i == j else 0 for j in range(n)], 0) for i in range(n)
        ]
        gram = np.array(
            [[float(product_integral(mp, a.data, b.data)) for b in basis] for a in basis]
        )
        rhs = np.array([float(self.exact_inner(mp, a)) for a in basis])
        coef = np.linalg.solve(gram, rhs)
        return AffineFunction(coef[1:].tolist(), float(coef[0]))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "terms": [
                {"coefficient": float(c), "pieces": [p.to_dict() for p in pieces]}
                for c, pieces in self.terms
            ],
            "affine": self.affine.to_dict(),
        }


def crease_functional(
    mp: MeasuredPolytope, density: Union[Number, AffineFunction], h: AffineFunction
) -> FunctionalValue:
    """
    Exact L_A(max{h, 0}) by clipping mp to {h >= 0}.

    Rational when mp, density and h are rational.

    Example:
        For the trapezium with l = 2, weights on the vertical edges and its
        extremal A, every crease through (0, u) and (1, 2u) gives 0.
    """
    region = mp.clip(h.gradient, h.constant)
    if region is None:
        return FunctionalValue(0, 0)
    g = as_affine(density, mp.dim)
    interior, boundary = region_integral(region, h.data, g.data)
    return FunctionalValue(boundary, interior)


# Flow-side functionals. States come from polystab.calabiflow and carry their
# own one-dimensional grid.

def _flow_grid(state: Any) -> Any:
    grid = getattr(state, "grid", None)
    if grid is None or not hasattr(grid, "relative_log_det"):
        raise ValidationError(
            f"Expected a flow state carrying a FlowGrid, got {type(state).__name__}"
        )
    return grid


def mabuchi_F(density: Union[Number, AffineFunction, np.ndarray], state: Any) -> float:
    """
    Relative Mabuchi-type functional F_A(u) - F_A(u0) of a flow state.

    F_A(u) = -integral of log det(u_ij) d mu + L_A(u). Relative to the model
    potential u0 the log term is -integral of log(1 + psi0 v'') and the
    linear term is L_A(v) for the accumulated smooth part v.

    Args:
        density: Constant, affine or nodal density A
        state: FlowState; its own grid carries the quadrature

    Returns:
        The relative functional, +inf if u'' <= 0 at an interior node

    Raises:
        ValidationError: If state is not a flow state
    """
    grid = _flow_grid(state)
    log_term = grid.relative_log_det(state.smooth_part)
    v = state.true_smooth_part()
    a = density_on_grid(density, grid)
    linear = float(grid.boundary @ v - grid.weights @ (a * v))
    return log_term + linear


def density_on_grid(density: Any, grid: Any) -> np.ndarray:
    nodes = grid.nodes
    if isinstance(density, AffineFunction):
        return density(nodes[:, None])
    if isinstance(density, np.ndarray):
        return density
    return np.full(len(nodes), float(density))


def calabi_energy(state: Any, b_target: Any) -> float:
    """
    L2 distance ||S(u) - B|| between the scalar curvature of a state and a target.

    With B = S-hat this is the Calabi functional; with B the optimal density
    it is the residual of the flow limit.

    Raises:
        ValidationError: If state is not a flow state
    """
    from .calabiflow import scalar_curvature

    grid = _flow_grid(state)
    s = scalar_curvature(state)
    diff = s - density_on_grid(b_target, grid)
    return math.sqrt(float(grid.weights @ (diff * diff)))


def weighted_linear(density: Any, values: np.ndarray, grid: Any) -> float:
    """Discrete L_A on a flow grid: boundary sum minus weighted interior sum."""
    a = density_on_grid(density, grid)
    return float(grid.boundary @ values - grid.weights @ (a * values))


def _is_zero(g: AffineFunction) -> bool:
    return all(float(v) == 0.0 for v in g.gradient) and float(g.constant) == 0.0
