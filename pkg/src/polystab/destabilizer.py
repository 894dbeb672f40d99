"""
Optimal destabilising convex function and stability classification.

The optimal destabiliser minimises W(f) = L(f) / ||f|| over convex f. We
solve the equivalent strictly convex problem

    minimise  G(f) = L_D(f) + 1/2 ||f||^2

over node values f and subgradients s subject to the supporting-plane system
f_i >= f_j + s_j . (x_i - x_j), where D is the reference density (S-hat, or
the extremal affine function for the relative problem). At the minimiser
Phi, B = D - Phi satisfies L_B(f) >= 0 on the cone and L_B(Phi) = 0, and
L_D(Phi) = -||Phi||^2.

The QP is solved by over-relaxed ADMM with a cached sparse factorization and
active-set polishing. Pairs start from the mesh edges; violated pairs are
added as cutting planes until the whole system holds.
"""

import inspect
import logging
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import linprog, minimize
from scipy.sparse.linalg import splu

from .convexcone import (
    ConvexGridFunction,
    SimpleCrease,
    all_pairs,
    mesh_edge_pairs,
    nodal_subgradients,
    pairwise_violation,
    sample_cone,
    supporting_plane_rows,
)
from .core.config_manager import get_config_manager
from .core.error_utils import error_payload
from .core.exceptions import CertificateFailure, InfeasibleStart, SolverDiverged, ValidationError
from .functionals import (
    AffineFunction,
    affine_basis,
    crease_functional,
    density_nodal,
    eval_L,
    extremal_affine,
    project_affine,
)
from .geometry import MeasuredPolytope, scalar_summary
from .quadrature import Mesh, Quadrature, build_quadrature

logger = logging.getLogger(__name__)


class Verdict(Enum):
    """Stability classification of a measured polytope."""
    STABLE = "stable"
    SEMISTABLE_STRICT = "semistable_strict"
    UNSTABLE = "unstable"


class SolverOptions:
    """
    Tolerances and iteration controls for the destabilizer.

    Attributes:
        tol: Feasibility tolerance for cone constraints
        eps_rel: Stability threshold relative to vol_sigma
        rho: ADMM penalty
        sigma: ADMM proximal regularization
        relaxation: ADMM over-relaxation factor
        max_iter: ADMM iteration cap
        abs_tol: Absolute residual tolerance
        rel_tol: Relative residual tolerance
        restarts: Number of seeded restarts used for the uniqueness check
        polish: Polish the ADMM iterate on its active set
        polish_refine: Iterative refinement sweeps of the polish KKT solve
        max_cuts: Cutting-plane rounds before giving up
        cut_batch: Pairs added per round, per node
        crease_starts: Grid of (directions, offsets) seeding the crease search
        certificate_tol: Tolerance applied to certificate residuals
        battery_size: Number of cone samples used by the embedded certificate
        seed: Seed for restarts and batteries
        strict: Raise CertificateFailure instead of flagging the result
    """

    def __init__(
        self,
        tol: float = 1e-8,
        eps_rel: float = 1e-7,
        rho: float = 1.0,
        sigma: float = 1e-6,
        relaxation: float = 1.6,
        max_iter: int = 20000,
        abs_tol: float = 1e-9,
        rel_tol: float = 1e-9,
        restarts: int = 3,
        polish: bool = True,
        polish_refine: int = 25,
        max_cuts: int = 40,
        cut_batch: int = 8,
        crease_starts: Sequence[int] = (12, 8),
        certificate_tol: float = 1e-6,
        battery_size: int = 200,
        seed: int = 42,
        strict: bool = False,
    ):
        self.tol = tol
        self.eps_rel = eps_rel
        self.rho = rho
        self.sigma = sigma
        self.relaxation = relaxation
        self.max_iter = int(max_iter)
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol
        self.restarts = int(restarts)
        self.polish = polish
        self.polish_refine = int(polish_refine)
        self.max_cuts = int(max_cuts)
        self.cut_batch = max(int(cut_batch), 1)
        self.crease_starts = tuple(int(v) for v in crease_starts)
        self.certificate_tol = certificate_tol
        self.battery_size = int(battery_size)
        self.seed = int(seed)
        self.strict = strict

    @classmethod
    def from_config(cls, **overrides: Any) -> "SolverOptions":
        """Build options from the ``destabilizer`` config section, then apply overrides."""
        config = get_config_manager()
        values = config.section("destabilizer")
        values["battery_size"] = config.get("cone/battery_size", 200)
        values["seed"] = config.get("cli/seed", 42)
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = set(inspect.signature(cls).parameters)
        return cls(**{k: v for k, v in values.items() if k in known})

    def to_dict(self) -> Dict[str, Any]:
        return dict(vars(self), crease_starts=list(self.crease_starts))


class DestabilizerResult:
    """
    Optimal destabiliser and its certificates.

    Attributes:
        phi: Phi as a ConvexGridFunction on the mesh nodes
        b_density: Nodal values of B = D - Phi
        reference: The reference density D (S-hat or the extremal affine function)
        extremal: Extremal affine function A of the polytope
        s_hat: Average scalar curvature
        phi_norm: ||Phi||
        l_value: L_D(Phi)
        w_value: W(Phi) = L_D(Phi) / ||Phi|| (0 when Phi = 0)
        epsilon: Stability threshold on ||Phi||
        verdict: Verdict
        marginal: True when ||Phi|| or the secondary value is within a factor 10 of its threshold
        trusted: False when certificates exceed tolerance
        certificates: Certificate report dictionary
        witness: Crease or grid function realising L = 0 for strictly semistable input
        secondary: Values of the secondary classification
        restart_spread: Largest relative L2 distance between restarts
        iterations: ADMM iterations of the first run
    """

    def __init__(
        self,
        phi: ConvexGridFunction,
        b_density: np.ndarray,
        reference: AffineFunction,
        extremal: AffineFunction,
        s_hat: float,
        phi_norm: float,
        l_value: float,
        epsilon: float,
        iterations: int,
    ):
        self.phi = phi
        self.b_density = b_density
        self.reference = reference
        self.extremal = extremal
        self.s_hat = s_hat
        self.phi_norm = phi_norm
        self.l_value = l_value
        self.w_value = l_value / phi_norm if phi_norm > 0 else 0.0
        self.epsilon = epsilon
        self.iterations = iterations
        self.verdict = Verdict.UNSTABLE if phi_norm > epsilon else Verdict.STABLE
        self.marginal = epsilon / 10.0 < phi_norm < 10.0 * epsilon
        self.trusted = True
        self.certificates: Dict[str, Any] = {}
        self.witness: Optional[Any] = None
        self.secondary: Dict[str, Any] = {}
        self.restart_spread = 0.0

    @property
    def is_unstable(self) -> bool:
        return self.verdict is Verdict.UNSTABLE

    def to_dict(self) -> Dict[str, Any]:
        witness = None
        if self.witness is not None and hasattr(self.witness, "to_dict"):
            witness = self.witness.to_dict()
        return {
            "verdict": self.verdict.value,
            "marginal": self.marginal,
            "trusted": self.trusted,
            "phi_norm": self.phi_norm,
            "l_value": self.l_value,
            "w_value": self.w_value,
            "epsilon": self.epsilon,
            "s_hat": self.s_hat,
            "reference_density": self.reference.to_dict(),
            "extremal_affine": self.extremal.to_dict(),
            "phi_affine_part": self.certificates.get("phi_projection"),
            "certificates": {k: v for k, v in self.certificates.items() if k != "phi_projection"},
            "secondary": self.secondary,
            "witness": witness,
            "restart_spread": self.restart_spread,
            "iterations": self.iterations,
        }


# QP assembly and ADMM

class _ConeQP:
    """
    min 1/2 x'Px + q'x subject to A x >= 0 with x = (f, s) on a scaled mesh problem.

    A holds the supporting-plane rows of the pairs activated so far, each
    scaled to unit norm. Only f enters the objective.
    """

    def __init__(self, quad: Quadrature, reference_nodal: np.ndarray):
        mesh = quad.mesh
        self.mesh = mesh
        self.count = mesh.size
        self.size = mesh.size * (mesh.dim + 1)
        self.scale = float(mesh.lumped.mean())
        self.mass = (mesh.mass / self.scale).tocsc()
        free = self.size - self.count
        self.P = sparse.block_diag([self.mass, sparse.csc_matrix((free, free))]).tocsc()
        q_f = (mesh.boundary_weights - mesh.mass @ reference_nodal) / self.scale
        self.q = np.concatenate([q_f, np.zeros(free)])
        self.pairs = mesh_edge_pairs(mesh)
        self._assemble()

    def _assemble(self) -> None:
        rows = supporting_plane_rows(self.mesh.nodes, self.pairs)
        norms = np.sqrt(np.asarray(rows.multiply(rows).sum(axis=1)).ravel())
        self.A = (sparse.diags(1.0 / norms) @ rows).tocsr()

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return x[:self.count], x[self.count:].reshape(self.count, self.mesh.dim)

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x)

    def unconstrained(self) -> np.ndarray:
        f = splu(self.mass).solve(-self.q[:self.count])
        return np.concatenate([f, nodal_subgradients(f, self.mesh).ravel()])

    def violated_pairs(self, x: np.ndarray, tol: float, limit: int) -> np.ndarray:
        """Inactive pairs whose scaled row is below -tol, most violated first."""
        f, s = self.split(x)
        nodes = self.mesh.nodes
        gap = pairwise_violation(f, s, nodes)
        dist2 = ((nodes[:, None, :] - nodes[None, :, :]) ** 2).sum(axis=2)
        gap = gap / np.sqrt(2.0 + dist2)
        gap[self.pairs[:, 0], self.pairs[:, 1]] = 0.0
        np.fill_diagonal(gap, 0.0)
        i, j = np.nonzero(gap > tol * max(1.0, float(np.abs(f).max())))
        if not len(i):
            return np.empty((0, 2), dtype=int)
        order = np.argsort(-gap[i, j])[:limit]
        return np.column_stack([i[order], j[order]])

    def add_pairs(self, pairs: np.ndarray) -> None:
        self.pairs = np.unique(np.vstack([self.pairs, pairs]), axis=0)
        self._assemble()


def _admm(
    qp: _ConeQP, x0: np.ndarray, opts: SolverOptions
) -> Tuple[np.ndarray, np.ndarray, int, bool]:
    """Over-relaxed ADMM; returns (x, y, iterations, converged). y <= 0 on active rows."""
    P, q, A = qp.P, qp.q, qp.A
    rho, sigma, alpha = opts.rho, opts.sigma, opts.relaxation
    n = qp.size
    kkt = (P + sigma * sparse.identity(n) + rho * (A.T @ A)).tocsc()
    try:
        lu = splu(kkt)
    except RuntimeError as e:
        logger.error(f"ADMM factorization failed: {e}")
        raise SolverDiverged(f"ADMM factorization failed: {e}") from e

    x = x0.copy()
    z = np.maximum(A @ x, 0.0)
    y = np.zeros(A.shape[0])
    for it in range(1, opts.max_iter + 1):
        x_tilde = lu.solve(sigma * x - q + A.T @ (rho * z - y))
        z_tilde = A @ x_tilde
        x = alpha * x_tilde + (1.0 - alpha) * x
        z_relaxed = alpha * z_tilde + (1.0 - alpha) * z
        z_new = np.maximum(z_relaxed + y / rho, 0.0)
        y = y + rho * (z_relaxed - z_new)
        z = z_new

        if it % 25 == 0 or it == opts.max_iter:
            ax = A @ x
            r_prim = np.abs(ax - z).max(initial=0.0)
            px = P @ x
            aty = A.T @ y
            r_dual = np.abs(px + q + aty).max()
            eps_prim = opts.abs_tol + opts.rel_tol * max(np.abs(ax).max(initial=0.0), np.abs(z).max(initial=0.0))
            eps_dual = opts.abs_tol + opts.rel_tol * max(np.abs(px).max(), np.abs(aty).max(), np.abs(q).max())
            if it % 1000 == 0:
                logger.debug(f"ADMM iteration {it}: primal {r_prim:.3e}, dual {r_dual:.3e}")
            if r_prim <= eps_prim and r_dual <= eps_dual:
                return x, y, it, True
    return x, y, opts.max_iter, False


def _polish(
    qp: _ConeQP, x: np.ndarray, y: np.ndarray, opts: SolverOptions
) -> Optional[np.ndarray]:
    """
    Solve the KKT system of the equality QP on a guessed active set.

    The regularized system [[P + dI, A'], [A, -dI]] is factored once and
    iterative refinement removes the regularization, starting from the
    ADMM iterate so that the undetermined subgradients stay close to it.
    The point is accepted when it is feasible and its multipliers are <= 0.
    """
    ax = qp.A @ x
    scale = max(1.0, np.abs(x).max())
    candidates = [
        ax <= 1e-6 * scale,
        -y > 1e-9 * max(1.0, np.abs(y).max(initial=0.0)),
        ax <= 1e-4 * scale,
    ]
    delta = 1e-7
    n = qp.size
    seen = set()
    for active in candidates:
        key = active.tobytes()
        if key in seen:
            continue
        seen.add(key)
        a_act = qp.A[active]
        m = a_act.shape[0]
        exact = sparse.bmat([[qp.P, a_act.T], [a_act, sparse.csc_matrix((m, m))]]).tocsc()
        shift = sparse.block_diag([delta * sparse.identity(n), -delta * sparse.identity(m)])
        try:
            lu = splu((exact + shift).tocsc())
        except RuntimeError:
            continue
        rhs = np.concatenate([-qp.q, np.zeros(m)])
        z = np.concatenate([x, y[active]])
        for _ in range(opts.polish_refine):
            r = rhs - exact @ z
            if np.abs(r).max(initial=0.0) <= 1e-13 * (1.0 + np.abs(rhs).max()):
                break
            z = z + lu.solve(r)
        x_p, y_p = z[:n], z[n:]
        if (qp.A @ x_p).min(initial=0.0) < -opts.tol * max(1.0, np.abs(x_p).max()):
            continue
        if y_p.max(initial=0.0) > 1e-7 * (1.0 + np.abs(y_p).max(initial=0.0)):
            continue
        stationarity = np.abs(qp.P @ x_p + qp.q + a_act.T @ y_p).max()
        if stationarity <= 1e-7 * (1.0 + np.abs(qp.q).max()):
            return x_p
    return None


def _solve_active(qp: _ConeQP, x0: np.ndarray, opts: SolverOptions) -> Tuple[np.ndarray, int]:
    x, y, iterations, converged = _admm(qp, x0, opts)
    if opts.polish:
        polished = _polish(qp, x, y, opts)
        if polished is not None:
            if qp.objective(polished) <= qp.objective(x) + 1e-9 * (1.0 + abs(qp.objective(x))):
                return polished, iterations
        logger.warning("Active-set polish failed; keeping the ADMM iterate")
    if not converged:
        logger.error(f"ADMM did not converge in {opts.max_iter} iterations")
        raise SolverDiverged(f"ADMM did not converge in {opts.max_iter} iterations")
    return x, iterations


def _solve_cone_qp(
    qp: _ConeQP, x0: np.ndarray, opts: SolverOptions
) -> Tuple[np.ndarray, int]:
    """Cutting planes: solve on the active pairs, add the violated ones, repeat."""
    x, total = x0, 0
    limit = opts.cut_batch * qp.count
    for rounds in range(opts.max_cuts + 1):
        x, iterations = _solve_active(qp, x, opts)
        total += iterations
        new = qp.violated_pairs(x, opts.tol, limit)
        if not len(new):
            logger.debug(f"Cone QP settled after {rounds} cuts with {len(qp.pairs)} active pairs")
            return x, total
        logger.debug(f"Cut round {rounds + 1}: adding {len(new)} violated pairs")
        qp.add_pairs(new)
    logger.error(f"Cutting planes still violated after {opts.max_cuts} rounds")
    raise SolverDiverged(
        f"Cutting planes still violated after {opts.max_cuts} rounds",
        details={"active_pairs": int(len(qp.pairs))},
    )


def _reference_density(mp: MeasuredPolytope, density: Any) -> AffineFunction:
    summary = scalar_summary(mp)
    if isinstance(density, AffineFunction):
        return density
    if density is None or density == "constant":
        return AffineFunction.constant_function(summary.s_hat, mp.dim)
    if density == "extremal":
        return extremal_affine(mp)
    return AffineFunction.constant_function(density, mp.dim)


def solve_optimal_destabilizer(
    mp: MeasuredPolytope,
    quad: Optional[Quadrature] = None,
    opts: Optional[SolverOptions] = None,
    density: Any = None,
    certify: bool = True,
    classify: bool = True,
) -> DestabilizerResult:
    """
    Compute the optimal destabiliser Phi and B = D - Phi.

    Args:
        mp: Measured polytope
        quad: Quadrature (default: built from mp)
        opts: Solver options (default: from config)
        density: Reference density D: None or "constant" for S-hat,
            "extremal" for the extremal affine function, or an AffineFunction
        certify: Attach certificates computed on a fresh battery
        classify: Separate stable from strictly semistable when Phi = 0

    Returns:
        DestabilizerResult

    Raises:
        SolverDiverged: ADMM hit its iteration cap and polishing failed, or
            cutting planes did not settle within max_cuts rounds
        CertificateFailure: Certificates out of tolerance and ``opts.strict``

    Example:
        On [0, 1] with weights (0, 1), Phi = 3 - 6x and ||Phi||^2 = 3.
    """
    if quad is None:
        quad = build_quadrature(mp)
    if opts is None:
        opts = SolverOptions.from_config()
    summary = scalar_summary(mp)
    reference = _reference_density(mp, density)
    extremal = extremal_affine(mp)
    mesh = quad.mesh
    ref_nodal = density_nodal(reference, quad)

    qp = _ConeQP(quad, ref_nodal)
    start = qp.unconstrained()
    solution, iterations = _solve_cone_qp(qp, start, opts)
    phi_values, phi_subgradients = qp.split(solution)

    rng = np.random.default_rng(opts.seed)
    spread = 0.0
    base_norm = mesh.norm(phi_values)
    for _ in range(max(opts.restarts - 1, 0)):
        noise = rng.normal(size=qp.size) * (1.0 + np.abs(start).max())
        other, _ = _solve_cone_qp(qp, start + noise, opts)
        spread = max(spread, mesh.norm(qp.split(other)[0] - phi_values) / max(base_norm, 1e-300))
    if opts.restarts > 1:
        logger.debug(f"Restart spread: {spread:.3e}")

    phi = ConvexGridFunction(phi_values, phi_subgradients, mesh.nodes, mp.centroid)
    phi_norm = mesh.norm(phi_values)
    l_value = eval_L(reference, phi_values, quad).value
    epsilon = opts.eps_rel * float(summary.vol_sigma)
    result = DestabilizerResult(
        phi,
        ref_nodal - phi_values,
        reference,
        extremal,
        float(summary.s_hat),
        phi_norm,
        float(l_value),
        epsilon,
        iterations,
    )
    result.restart_spread = spread if base_norm > epsilon else 0.0
    logger.info(
        f"Destabilizer: ||Phi|| = {phi_norm:.6g} (threshold {epsilon:.3g}), "
        f"L(Phi) = {l_value:.6g}, verdict {result.verdict.value}"
    )
    if result.marginal:
        logger.warning(f"Marginal verdict: ||Phi|| = {phi_norm:.3g} near threshold {epsilon:.3g}")

    if result.is_unstable:
        result.witness = phi
    elif classify:
        _classify_semistable(result, mp, quad, reference, opts)
    if certify:
        report = certificate_check(result, mp, quad, opts.battery_size, opts.seed, opts)
        result.certificates = report
        if not report["passed"]:
            result.trusted = False
            failure = CertificateFailure(
                "Certificates exceed tolerance", details={"failed": report["failed"]}
            )
            logger.warning(f"Destabilizer result untrusted: {report['failed']}")
            result.certificates["error"] = error_payload(failure)
            if opts.strict:
                raise failure
    return result


# Secondary classification: stable versus strictly semistable

def _normalized_cone_lp(
    mesh: Mesh, cost: np.ndarray, weights: np.ndarray, base_point: np.ndarray
) -> Tuple[Optional[float], Optional[ConvexGridFunction]]:
    """
    min cost . f over extendable f >= 0 with f(x0) = 0 and weights . f = 1.

    The cone is the full pairwise supporting-plane system over (f, s); an
    unbounded or infeasible program gives (None, None).
    """
    count, n = mesh.size, mesh.dim
    rows = supporting_plane_rows(mesh.nodes, all_pairs(count))
    anchor = mesh.nearest_node(base_point)
    normalization = np.zeros((2, count * (n + 1)))
    normalization[0, :count] = weights
    normalization[1, anchor] = 1.0
    res = linprog(
        np.concatenate([cost, np.zeros(count * n)]),
        A_ub=-rows, b_ub=np.zeros(rows.shape[0]),
        A_eq=sparse.csr_matrix(normalization), b_eq=[1.0, 0.0],
        bounds=[(0.0, None)] * count + [(None, None)] * (count * n),
        method="highs",
    )
    if res.status != 0:
        logger.debug(f"Normalized cone LP did not solve: {res.message}")
        return None, None
    f = res.x[:count]
    s = res.x[count:].reshape(count, n)
    return float(res.fun), ConvexGridFunction(f, s, mesh.nodes, base_point)


def _crease_from(normal: np.ndarray, s: float, vertices: np.ndarray, x0: np.ndarray) -> AffineFunction:
    s = min(max(s, 1e-6), 1.0 - 1e-6)
    base = float(normal @ x0)
    top = float((vertices @ normal).max())
    tau = base + s * (top - base)
    return AffineFunction(normal.tolist(), -tau)


def _crease_ratio(mp: MeasuredPolytope, density: Any, h: AffineFunction) -> float:
    value = crease_functional(mp, density, h)
    boundary = float(value.boundary_term)
    l_value = float(value.value)
    if boundary <= 1e-14:
        if l_value < -1e-14:
            return -math.inf
        return math.inf
    return l_value / boundary


def crease_search(
    mp: MeasuredPolytope,
    density: Any,
    base_point: np.ndarray,
    starts: Sequence[int] = (12, 8),
) -> Tuple[float, Optional[SimpleCrease]]:
    """
    Minimise L_D(max{h, 0}) / boundary integral over creases avoiding the base point.

    Creases are parameterised by a direction and a relative offset s in (0, 1)
    between the base point and the farthest vertex in that direction. A grid
    of starts is refined with Nelder-Mead. Only dimensions 1 and 2 are
    searched.

    Returns:
        (smallest ratio found, crease realising it)
    """
    if mp.dim > 2:
        return math.inf, None
    vertices = mp.vertex_array
    x0 = np.asarray(base_point, dtype=float)
    n_dir, n_off = starts
    offsets = (np.arange(n_off) + 0.5) / n_off

    def direction(theta: float) -> np.ndarray:
        return np.array([math.cos(theta), math.sin(theta)])

    best_value, best_h = math.inf, None
    if mp.dim == 1:
        for sign in (1.0, -1.0):
            normal = np.array([sign])
            grid = [(float(_crease_ratio(mp, density, _crease_from(normal, s, vertices, x0))), s) for s in offsets]
            value0, s0 = min(grid)
            res = minimize(
                lambda p: min(_crease_ratio(mp, density, _crease_from(normal, p[0], vertices, x0)), 1e6),
                [s0], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14},
            )
            for value, s in ((res.fun, res.x[0]), (value0, s0)):
                if value < best_value:
                    best_value, best_h = float(value), _crease_from(normal, s, vertices, x0)
    else:
        grid = []
        for i in range(n_dir):
            theta = 2.0 * math.pi * i / n_dir
            for s in offsets:
                h = _crease_from(direction(theta), s, vertices, x0)
                grid.append((_crease_ratio(mp, density, h), theta, s))
        grid.sort(key=lambda item: item[0])
        for value0, theta0, s0 in grid[:3]:
            res = minimize(
                lambda p: min(_crease_ratio(mp, density, _crease_from(direction(p[0]), p[1], vertices, x0)), 1e6),
                [theta0, s0], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14},
            )
            for value, theta, s in ((res.fun, res.x[0], res.x[1]), (value0, theta0, s0)):
                if value < best_value:
                    best_value = float(value)
                    best_h = _crease_from(direction(theta), s, vertices, x0)
    return best_value, SimpleCrease(best_h) if best_h is not None else None


def _classify_semistable(
    result: DestabilizerResult,
    mp: MeasuredPolytope,
    quad: Quadrature,
    density: Any,
    opts: SolverOptions,
) -> None:
    base_point = mp.centroid
    threshold = result.epsilon
    mesh = quad.mesh
    lp_value, lp_function = None, None
    if np.any(mesh.boundary_weights > 0):
        cost = mesh.boundary_weights - mesh.mass @ density_nodal(density, quad)
        lp_value, lp_function = _normalized_cone_lp(mesh, cost, mesh.boundary_weights, base_point)
        if lp_value is None:
            logger.warning("Normalized cone LP did not solve; relying on the crease search")
    crease_value, crease = crease_search(mp, density, base_point, opts.crease_starts)
    result.secondary = {
        "lp_value": lp_value,
        "crease_value": crease_value if math.isfinite(crease_value) else None,
        "threshold": threshold,
    }
    candidates = [v for v in (lp_value, crease_value) if v is not None and math.isfinite(v)]
    if not candidates:
        return
    value = min(candidates)
    if value < -max(threshold, opts.certificate_tol):
        logger.warning(f"Secondary classification found L = {value:.3g} < 0 on a normalized function")
        result.verdict = Verdict.UNSTABLE
        result.marginal = True
    elif value <= threshold:
        result.verdict = Verdict.SEMISTABLE_STRICT
    else:
        result.verdict = Verdict.STABLE
        if value < 10.0 * threshold:
            result.marginal = True
    if result.verdict is not Verdict.STABLE:
        if crease is not None and crease_value <= (lp_value if lp_value is not None else math.inf):
            result.witness = crease
        elif lp_function is not None:
            result.witness = lp_function
    logger.info(f"Secondary classification value {value:.6g}: {result.verdict.value}")


def semistability_test(
    mp: MeasuredPolytope,
    quad: Optional[Quadrature] = None,
    opts: Optional[SolverOptions] = None,
    certify: bool = True,
) -> Tuple[Verdict, Optional[Any], DestabilizerResult]:
    """
    Semistability relative to the extremal affine function.

    Runs the destabilizer with D = A. The polytope is semistable when the
    relative minimiser vanishes; the secondary classification then separates
    stable from strictly semistable input and returns a witness for the latter.

    Returns:
        (verdict, witness or None, relative DestabilizerResult)

    Example:
        The trapezium with l = 2 and weights on its vertical edges is
        semistable_strict, witnessed by a crease through (0, u) and (1, 2u).
    """
    result = solve_optimal_destabilizer(mp, quad, opts, density="extremal", certify=certify)
    return result.verdict, result.witness, result


# Certificates

def _affine_fit(values: np.ndarray, quad: Quadrature) -> Tuple[AffineFunction, float]:
    fit = project_affine(values, quad)
    residual = quad.mesh.norm(values - fit(quad.mesh_nodes))
    return fit, residual


def certificate_check(
    result: DestabilizerResult,
    mp: MeasuredPolytope,
    quad: Quadrature,
    battery_size: int = 200,
    seed: int = 42,
    opts: Optional[SolverOptions] = None,
) -> Dict[str, Any]:
    """
    Verify the characterisation of Phi on a fresh battery of convex functions.

    Reports |L_B(Phi)|, min over the battery of L_B(f) / ||f||,
    |L_D(Phi) + ||Phi||^2|, the distance between pi(Phi) and D - A, the
    orthogonality of Phi - pi(Phi) to affine functions, and the minimality
    of W(Phi) over the battery. When B is affine the battery is integrated
    exactly on the linear regions of each member.

    Returns:
        Dictionary of residuals with ``passed`` and the list of ``failed`` checks
    """
    if opts is None:
        opts = SolverOptions.from_config()
    mesh = quad.mesh
    tol = opts.certificate_tol
    phi = result.phi.values
    b_nodal = result.b_density
    scale = max(1.0, float(mp.vol_sigma))

    kkt = abs(eval_L(b_nodal, phi, quad).value)
    scaling = abs(result.l_value + result.phi_norm ** 2)

    projection = project_affine(phi, quad)
    target = result.reference - result.extremal
    affine_gap = mesh.norm(projection(mesh.nodes) - target(mesh.nodes))
    basis = affine_basis(quad)
    residual = phi - projection(mesh.nodes)
    orthogonality = float(np.abs(basis.T @ (mesh.mass @ residual)).max())

    b_fit, b_residual = _affine_fit(b_nodal, quad)
    exact = b_residual <= 1e-9 * scale
    battery = sample_cone(mp, battery_size, seed, quad)
    cone_min, w_gap = math.inf, math.inf
    w_phi = result.w_value
    for f in battery:
        if exact and f.analytic is not None:
            norm = f.analytic.exact_norm(mp)
            l_b = float(f.analytic.exact_L(mp, b_fit).value)
            l_d = float(f.analytic.exact_L(mp, result.reference).value)
        else:
            norm = mesh.norm(f.values)
            l_b = eval_L(b_nodal, f.values, quad).value
            l_d = eval_L(result.reference, f.values, quad).value
        if norm <= 1e-14:
            continue
        cone_min = min(cone_min, l_b / norm)
        w_gap = min(w_gap, l_d / norm - w_phi)

    checks = {
        "kkt_residual": kkt <= tol * scale,
        "scaling_residual": scaling <= tol * scale,
        "cone_min": cone_min >= -tol * scale,
        "affine_part": affine_gap <= max(tol, 1e-4) * scale,
        "orthogonality": orthogonality <= tol * scale,
        "w_minimality": w_gap >= -tol * scale,
    }
    failed = [name for name, ok in checks.items() if not ok]
    report = {
        "kkt_residual": kkt,
        "scaling_residual": scaling,
        "cone_min": cone_min if math.isfinite(cone_min) else None,
        "affine_part": affine_gap,
        "orthogonality": orthogonality,
        "w_minimality_gap": w_gap if math.isfinite(w_gap) else None,
        "battery_size": len(battery),
        "battery_seed": seed,
        "exact_battery": exact,
        "phi_projection": projection.to_dict(),
        "passed": not failed,
        "failed": failed,
    }
    logger.debug(f"Certificates: {report}")
    return report


# Oracle and E-membership

def brute_force_oracle(
    mp: MeasuredPolytope,
    resolution: int = 2,
    density: Any = None,
) -> ConvexGridFunction:
    """
    Ground-truth minimiser of G on a tiny mesh.

    Every ordered node pair enters the supporting-plane system from the
    start and the QP over (f, s) goes to cvxopt's interior point solver, so
    neither the cutting planes nor the ADMM iteration are involved.

    Args:
        mp: Measured polytope
        resolution: Mesh resolution; the mesh may have at most 8 nodes in 1-D
            and 9 nodes in 2-D
        density: Reference density as in solve_optimal_destabilizer

    Raises:
        ValidationError: If the mesh has too many nodes
        InfeasibleStart: If the interior point solver fails
    """
    from cvxopt import matrix, solvers

    quad = build_quadrature(mp, resolution)
    mesh = quad.mesh
    cap = 8 if mp.dim == 1 else 9
    if mesh.size > cap:
        raise ValidationError(f"Oracle mesh has {mesh.size} nodes; at most {cap} allowed")
    reference = _reference_density(mp, density)
    count, size = mesh.size, mesh.size * (mesh.dim + 1)
    P = np.zeros((size, size))
    P[:count, :count] = mesh.mass.toarray()
    q = np.zeros(size)
    q[:count] = mesh.boundary_weights - mesh.mass @ density_nodal(reference, quad)
    rows = supporting_plane_rows(mesh.nodes, all_pairs(count)).toarray()
    rows /= np.linalg.norm(rows, axis=1)[:, None]

    solvers.options["show_progress"] = False
    solvers.options["abstol"] = 1e-11
    solvers.options["reltol"] = 1e-11
    solvers.options["feastol"] = 1e-11
    solvers.options["maxiters"] = 200
    sol = solvers.qp(matrix(P), matrix(q), matrix(-rows), matrix(np.zeros(len(rows))))
    if sol["x"] is None:
        raise InfeasibleStart(f"Oracle QP failed with status {sol['status']}")
    if sol["status"] != "optimal":
        logger.warning(f"Oracle QP status: {sol['status']}")
    x = np.array(sol["x"]).ravel()
    return ConvexGridFunction(
        x[:count], x[count:].reshape(count, mesh.dim), mesh.nodes, mp.centroid
    )


def e_membership_value(h_nodal: np.ndarray, quad: Quadrature, base_point: np.ndarray) -> Optional[float]:
    """min L_h(f) over normalized convex f with unit integral; >= 0 means h is in E."""
    mesh = quad.mesh
    cost = mesh.boundary_weights - mesh.mass @ h_nodal
    value, _ = _normalized_cone_lp(mesh, cost, mesh.lumped, base_point)
    return value


def sample_E_members(
    result: DestabilizerResult,
    quad: Quadrature,
    count: int,
    seed: int = 42,
    max_halvings: int = 30,
) -> List[np.ndarray]:
    """
    Members h = B + lambda k of the discrete set E = {h : L_h >= 0 on the cone}.

    Each k is concave and orthogonal to affine functions (the negative of a
    battery member minus its affine projection); lambda is halved until the
    membership LP confirms h is in E.

    Returns:
        List of nodal densities
    """
    mp = quad.mp
    mesh = quad.mesh
    base_point = mp.centroid
    basis = affine_basis(quad)
    gram = basis.T @ (mesh.mass @ basis)
    battery = sample_cone(mp, count, seed, quad)
    scale = max(1.0, float(np.abs(result.b_density).max()))
    members: List[np.ndarray] = []
    for f in battery:
        coef = np.linalg.solve(gram, basis.T @ (mesh.mass @ f.values))
        k = -(f.values - basis @ coef)
        k_norm = mesh.norm(k)
        if k_norm <= 1e-14:
            continue
        lam = scale / k_norm
        for _ in range(max_halvings):
            h = result.b_density + lam * k
            value = e_membership_value(h, quad, base_point)
            if value is not None and value >= -1e-10:
                members.append(h)
                break
            lam /= 2.0
    logger.info(f"Sampled {len(members)} members of E from {len(battery)} candidates")
    return members
