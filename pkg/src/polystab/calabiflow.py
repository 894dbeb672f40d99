"""
Calabi flow of symplectic potentials on weighted intervals.

A potential is u = u0 + v where u0 is the weighted Guillemin model

    u0(x) = (1/w0) d0 log d0 + (1/w1) d1 log d1,   d0 = x - a, d1 = b - x,

so that psi = 1/u'' vanishes at each endpoint with slope equal to the
endpoint weight, and v is smooth up to the boundary. The scalar curvature
is S = -psi''; the flow is dv/dt = -S(u), followed by removal of the affine
part of v (affine terms do not change the metric).

Discretisation on a (graded) grid with lumped weights W and P1 stiffness K:

    v''_i = -(K v)_i / W_i             at interior nodes
    psi_i = psi0_i / (1 + psi0_i v''_i)   (0 at the endpoints)
    S     = W^-1 (K psi + b)           with b the endpoint weights

S is then the exact W-gradient of the discrete Mabuchi functional, which
keeps the monotonicity and convexity identities of the continuous flow.
"""

import logging
import math
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import sympy as sp

from .convexcone import sample_cone
from .core.config_manager import get_config_manager
from .core.exceptions import (
    BlowUpDetected,
    ConvexityLoss,
    NonConvexStart,
    ResolutionTooSmall,
    StepRejected,
    ValidationError,
    ZeroWeightEndpoint,
)
from .core.validation import validate_positive
from .functionals import (
    AffineFunction,
    calabi_energy,
    discrete_extremal_affine,
    extremal_affine,
    mabuchi_F,
    weighted_linear,
)
from .geometry import MeasuredPolytope, scalar_summary
from .quadrature import graded_parameters

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = [
    "t",
    "calabi_energy",
    "target_residual",
    "F_Shat",
    "F_B",
    "extremal_residual",
    "L_Sv0",
    "boundary_integral",
]


class FlowOptions:
    """
    Step control for run_flow.

    Attributes:
        resolution: Grid intervals
        grading: Boundary grading exponent
        cfl: dt = cfl * min h^4 / psi^2
        max_halvings: Rejections tolerated per step before giving up
        blowup_cap: Largest admissible max|S|
        energy_slack: Per-step slack for the monotonicity checks
        target_tol: Stop once ||S - B|| falls below this
        record_every: Diagnostics row interval in accepted steps (1 records every step)
        max_steps: Hard cap on accepted steps
    """

    def __init__(
        self,
        resolution: int = 48,
        grading: float = 1.0,
        cfl: float = 0.05,
        max_halvings: int = 30,
        blowup_cap: float = 1e6,
        energy_slack: float = 1e-10,
        target_tol: float = 1e-3,
        record_every: int = 1,
        max_steps: int = 5_000_000,
    ):
        self.resolution = int(resolution)
        self.grading = float(grading)
        self.cfl = cfl
        self.max_halvings = int(max_halvings)
        self.blowup_cap = blowup_cap
        self.energy_slack = energy_slack
        self.target_tol = target_tol
        self.record_every = max(int(record_every), 1)
        self.max_steps = int(max_steps)

    @classmethod
    def from_config(cls, **overrides: Any) -> "FlowOptions":
        values = get_config_manager().section("flow")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _xlogx(d: np.ndarray) -> np.ndarray:
    safe = np.where(d > 0, d, 1.0)
    return np.where(d > 0, d * np.log(safe), 0.0)


class FlowGrid:
    """
    One-dimensional grid with the model potential sampled on it.

    Attributes:
        nodes: (N,) node coordinates
        spacing: (N-1,) interval lengths
        weights: (N,) lumped interval weights W
        boundary: (N,) endpoint weights (zero inside)
        psi0: 1/u0'' at the nodes (0 at the endpoints)
        u0: model potential values at the nodes
        du0: callable derivative of u0 (interior points only)
    """

    def __init__(self, a: float, b: float, w0: float, w1: float, resolution: int, grading: float = 1.0):
        self.a, self.b = a, b
        self.w0, self.w1 = w0, w1
        self.nodes = a + (b - a) * graded_parameters(resolution, grading)
        self.spacing = np.diff(self.nodes)
        self.weights = np.zeros(len(self.nodes))
        self.weights[:-1] += self.spacing / 2.0
        self.weights[1:] += self.spacing / 2.0
        self.boundary = np.zeros(len(self.nodes))
        self.boundary[0] = w0
        self.boundary[-1] = w1

        x = sp.Symbol("x")
        d0, d1 = x - sp.nsimplify(a), sp.nsimplify(b) - x
        model = d0 * sp.log(d0) / sp.nsimplify(w0) + d1 * sp.log(d1) / sp.nsimplify(w1)
        psi0 = sp.simplify(1 / sp.diff(model, x, 2))
        self.model_expression = model
        self.psi0_expression = psi0
        psi0_fn = sp.lambdify(x, psi0, "numpy")
        self.du0 = sp.lambdify(x, sp.diff(model, x), "numpy")
        self.psi0 = np.zeros(len(self.nodes))
        self.psi0[1:-1] = psi0_fn(self.nodes[1:-1])
        self.u0 = _xlogx(self.nodes - a) / w0 + _xlogx(b - self.nodes) / w1
        self.interior = slice(1, len(self.nodes) - 1)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def stiffness(self, values: np.ndarray) -> np.ndarray:
        """K @ values for the P1 stiffness matrix."""
        slopes = np.diff(values) / self.spacing
        out = np.empty_like(values)
        out[0] = -slopes[0]
        out[-1] = slopes[-1]
        out[1:-1] = slopes[:-1] - slopes[1:]
        return out

    def second_derivative(self, values: np.ndarray) -> np.ndarray:
        """Discrete v'' at interior nodes (0 at the endpoints)."""
        out = np.zeros_like(values)
        out[self.interior] = -self.stiffness(values)[self.interior] / self.weights[self.interior]
        return out

    def convexity_margin(self, smooth_part: np.ndarray) -> np.ndarray:
        """1 + psi0 v'' at interior nodes; u'' > 0 exactly when all are positive."""
        return 1.0 + self.psi0[self.interior] * self.second_derivative(smooth_part)[self.interior]

    def psi(self, smooth_part: np.ndarray) -> np.ndarray:
        out = np.zeros(self.size)
        out[self.interior] = self.psi0[self.interior] / self.convexity_margin(smooth_part)
        return out

    def curvature(self, smooth_part: np.ndarray) -> np.ndarray:
        return (self.stiffness(self.psi(smooth_part)) + self.boundary) / self.weights

    def relative_log_det(self, smooth_part: np.ndarray) -> float:
        """-sum W log(1 + psi0 v''): the log-det part of F relative to u0."""
        margin = self.convexity_margin(smooth_part)
        if np.any(margin <= 0):
            return math.inf
        return float(-self.weights[self.interior] @ np.log(margin))

    def affine_projection(self, values: np.ndarray) -> np.ndarray:
        """Coefficients (c0, c1) of the W-orthogonal projection onto {1, x}."""
        basis = np.vstack([np.ones(self.size), self.nodes]).T
        gram = basis.T @ (self.weights[:, None] * basis)
        return np.linalg.solve(gram, basis.T @ (self.weights * values))

    def max_dt(self, smooth_part: np.ndarray, cfl: float) -> float:
        psi = self.psi(smooth_part)[self.interior]
        local = np.minimum(self.spacing[:-1], self.spacing[1:])
        with np.errstate(divide="ignore"):
            bounds = np.where(psi > 0, local ** 4 / psi ** 2, np.inf)
        return cfl * float(bounds.min())


class FlowState:
    """
    A symplectic potential u = u0 + v on a flow grid.

    Attributes:
        smooth_part: v at the grid nodes, W-orthogonal to affine functions
        time: Flow time
        mp: The measured interval
        grid: FlowGrid
        gauge: Accumulated affine part (c0, c1) removed from v
    """

    def __init__(
        self,
        smooth_part: np.ndarray,
        time: float,
        mp: MeasuredPolytope,
        grid: FlowGrid,
        gauge: Optional[np.ndarray] = None,
    ):
        self.smooth_part = smooth_part
        self.time = time
        self.mp = mp
        self.grid = grid
        self.gauge = np.zeros(2) if gauge is None else gauge

    def true_smooth_part(self) -> np.ndarray:
        return self.smooth_part + self.gauge[0] + self.gauge[1] * self.grid.nodes

    def potential(self) -> np.ndarray:
        return self.grid.u0 + self.true_smooth_part()

    def is_convex(self) -> bool:
        return bool(np.all(self.grid.convexity_margin(self.smooth_part) > 0))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "x": self.grid.nodes,
            "v": self.smooth_part,
            "u": self.potential(),
            "S": scalar_curvature(self),
        })


class FlowDiagnostics:
    """
    Time series recorded along a flow run, plus a run summary.

    Attributes:
        frame: DataFrame with columns t, calabi_energy, target_residual,
            F_Shat, F_B, extremal_residual, L_Sv0, boundary_integral
        summary: Counters, growth ratios, limits and the coercivity estimate
    """

    def __init__(self) -> None:
        self.rows: List[Dict[str, float]] = []
        self.summary: Dict[str, Any] = {}

    def record(self, row: Dict[str, float]) -> None:
        self.rows.append(row)

    @property
    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=DIAGNOSTIC_COLUMNS)

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.summary)


def _endpoint_weights(mp: MeasuredPolytope) -> Tuple[float, float, float, float]:
    if mp.dim != 1:
        raise ValidationError(f"Calabi flow runs on intervals; got dimension {mp.dim}")
    a, b = float(mp.vertex_array[0, 0]), float(mp.vertex_array[-1, 0])
    w0 = w1 = None
    for facet in mp.facets:
        if facet.cut:
            continue
        if facet.normal[0] > 0:
            w0 = float(facet.sigma_weight)
        else:
            w1 = float(facet.sigma_weight)
    if not w0 or not w1:
        raise ZeroWeightEndpoint(
            f"Flow needs positive endpoint weights, got ({w0}, {w1}); use a small positive weight instead"
        )
    return a, b, w0, w1


def init_potential(
    mp: MeasuredPolytope,
    perturbation: Union[None, np.ndarray, Callable[[np.ndarray], np.ndarray]] = None,
    resolution: Optional[int] = None,
    grading: Optional[float] = None,
) -> FlowState:
    """
    Start a flow at u = u0 + perturbation.

    Args:
        mp: Measured interval with positive endpoint weights
        perturbation: Smooth field (callable on node coordinates or nodal
            array); None for the model potential itself
        resolution: Grid intervals (default: flow/resolution)
        grading: Grading exponent (default: flow/grading)

    Returns:
        FlowState at time 0 with the affine part of the perturbation moved
        into the gauge

    Raises:
        ValidationError: If mp is not an interval
        ZeroWeightEndpoint: If an endpoint weight is 0
        NonConvexStart: If u'' <= 0 somewhere

    Example:
        Weights (1/2, 1) on [0, 1] give u0 = 2 x log x + (1 - x) log(1 - x).
    """
    opts = FlowOptions.from_config(resolution=resolution, grading=grading)
    if opts.resolution < 2:
        raise ResolutionTooSmall(f"Flow grid needs at least 2 intervals, got {opts.resolution}")
    a, b, w0, w1 = _endpoint_weights(mp)
    grid = FlowGrid(a, b, w0, w1, opts.resolution, opts.grading)
    if perturbation is None:
        v = np.zeros(grid.size)
    elif callable(perturbation):
        v = np.asarray(perturbation(grid.nodes), dtype=float).reshape(-1)
    else:
        v = np.asarray(perturbation, dtype=float).reshape(-1)
    if v.shape != (grid.size,) or not np.all(np.isfinite(v)):
        raise NonConvexStart(f"Perturbation must give {grid.size} finite nodal values")
    margin = grid.convexity_margin(v)
    if np.any(margin <= 0):
        worst = int(np.argmin(margin)) + 1
        logger.error(f"Initial potential is not convex at x = {grid.nodes[worst]:.6g}")
        raise NonConvexStart(
            f"Initial potential is not convex at x = {grid.nodes[worst]:.6g}",
            details={"node": worst, "margin": float(margin.min())},
        )
    gauge = grid.affine_projection(v)
    v = v - gauge[0] - gauge[1] * grid.nodes
    logger.info(f"Initial potential on [{a}, {b}] with weights ({w0}, {w1}), {grid.size} nodes")
    return FlowState(v, 0.0, mp, grid, gauge)


def scalar_curvature(state: FlowState) -> np.ndarray:
    """
    Nodal scalar curvature S = -(1/u'')'' of a flow state.

    Raises:
        ConvexityLoss: If u'' <= 0 at an interior node

    Example:
        On [0, 1] with unit weights, u = u0 gives S = 2 at every node.
    """
    if not state.is_convex():
        raise ConvexityLoss(f"Potential lost convexity at t = {state.time:.6g}")
    return state.grid.curvature(state.smooth_part)


def _advance(state: FlowState, dt: float, s_current: np.ndarray) -> FlowState:
    grid = state.grid
    v = state.smooth_part - dt * s_current
    drift = grid.affine_projection(v)
    v = v - drift[0] - drift[1] * grid.nodes
    return FlowState(v, state.time + dt, state.mp, grid, state.gauge + drift)


def _energy(grid: FlowGrid, s: np.ndarray, target: np.ndarray) -> float:
    diff = s - target
    return math.sqrt(float(grid.weights @ (diff * diff)))


def _checked_step(
    state: FlowState, dt: float, s_current: np.ndarray, cfl: float
) -> Tuple[FlowState, np.ndarray]:
    bound = state.grid.max_dt(state.smooth_part, cfl)
    if dt > bound * (1.0 + 1e-12):
        raise StepRejected(
            f"dt = {dt:.3g} exceeds the CFL bound {bound:.3g}", suggested_dt=dt / 2.0
        )
    candidate = _advance(state, dt, s_current)
    if not candidate.is_convex():
        raise StepRejected(f"Convexity lost with dt = {dt:.3g}", suggested_dt=dt / 2.0)
    return candidate, state.grid.curvature(candidate.smooth_part)


@validate_positive("dt")
def step(state: FlowState, dt: float, cfl: Optional[float] = None) -> FlowState:
    """
    One explicit Euler step of dv/dt = -S(u), then affine gauge removal.

    Args:
        state: Convex flow state
        dt: Time step (> 0)
        cfl: Stability constant of the dt bound (default: flow/cfl)

    Returns:
        New FlowState at time state.time + dt

    Raises:
        StepRejected: If dt breaks the CFL bound or the step loses convexity;
            carries dt / 2
        ConvexityLoss: If the input state is not convex
    """
    if cfl is None:
        cfl = FlowOptions.from_config().cfl
    s_current = scalar_curvature(state)
    candidate, _ = _checked_step(state, dt, s_current, cfl)
    return candidate


def _normalized_boundary_integral(state: FlowState) -> float:
    """Boundary integral of u minus its supporting line at the middle node."""
    grid = state.grid
    c = grid.size // 2
    v = state.true_smooth_part()
    u = state.potential()
    dv = (v[c + 1] - v[c - 1]) / (grid.nodes[c + 1] - grid.nodes[c - 1])
    slope = float(grid.du0(grid.nodes[c])) + dv
    ends = [0, grid.size - 1]
    tilde = [u[i] - u[c] - slope * (grid.nodes[i] - grid.nodes[c]) for i in ends]
    return float(grid.boundary[0] * tilde[0] + grid.boundary[-1] * tilde[1])


def coercivity_estimate(state: FlowState, count: int = 50, seed: int = 42) -> float:
    """
    Smallest L_S(f) / boundary integral of f over a normalized battery on the interval.

    S is the scalar curvature of ``state``; a positive value is a lower
    bound candidate for the coercivity constant of that density.
    """
    grid = state.grid
    s = scalar_curvature(state)
    battery = sample_cone(state.mp, count, seed)
    ratios = []
    for f in battery:
        if f.analytic is None:
            continue
        values = f.analytic(grid.nodes[:, None])
        boundary = float(grid.boundary @ values)
        if boundary <= 1e-12:
            continue
        ratios.append(weighted_linear(s, values, grid) / boundary)
    lam = float(min(ratios)) if ratios else math.nan
    logger.info(f"Coercivity estimate over {len(ratios)} functions: {lam:.6g}")
    return lam


def _resolve_target(
    target: Union[None, str, AffineFunction, np.ndarray], state0: FlowState
) -> Union[AffineFunction, np.ndarray]:
    grid = state0.grid
    if target is None:
        target = "exact"
    if isinstance(target, str):
        if target == "exact":
            return extremal_affine(state0.mp)
        if target == "discrete":
            return discrete_extremal_affine(grid.weights, grid.nodes[:, None], grid.boundary)
        raise ValidationError(f"Unknown flow target {target!r}; use 'exact' or 'discrete'")
    if isinstance(target, AffineFunction):
        return target
    values = np.asarray(target, dtype=float).reshape(-1)
    if values.shape != (grid.size,):
        raise ValidationError(f"Target needs {grid.size} nodal values, got {values.size}")
    return values


def run_flow(
    state0: FlowState,
    t_end: float,
    callbacks: Optional[Sequence[Callable[[FlowState, Dict[str, float]], None]]] = None,
    target: Union[None, str, AffineFunction, np.ndarray] = None,
    opts: Optional[FlowOptions] = None,
) -> Tuple[FlowDiagnostics, FlowState]:
    """
    Run the flow to t_end with adaptive explicit steps.

    Diagnostics are recorded every ``record_every`` accepted steps and at
    the end: Calabi energy ||S - S_hat||, target residual ||S - B||, relative
    F_Shat and F_B, the residual against the extremal density of the grid,
    L_{S(u0)}(u_t) and the normalized boundary integral.

    Calabi energy and Mabuchi monotonicity and the F_B decrease bound are
    checked at every accepted step, recorded or not, and their violations
    counted in the summary. F_B and its bound use the extremal density of
    the flow grid, the limit the discrete flow actually approaches.

    Args:
        state0: Initial state
        t_end: Final time
        callbacks: Called with (state, row) whenever a row is recorded
        target: Density B for the residual and the stopping test: "exact"
            (default, the extremal affine function of the measured
            interval), "discrete" (its lumped-grid counterpart), an
            AffineFunction or nodal values
        opts: Flow options

    Returns:
        (FlowDiagnostics, final FlowState)

    Raises:
        ValidationError: If the target is not understood
        ConvexityLoss: If a step keeps failing after max_halvings halvings
        BlowUpDetected: If max|S| exceeds blowup_cap
    """
    if opts is None:
        opts = FlowOptions.from_config()
    callbacks = list(callbacks or [])
    grid = state0.grid
    s_hat = float(scalar_summary(state0.mp).s_hat)
    target = _resolve_target(target, state0)
    b_nodal = target(grid.nodes[:, None]) if isinstance(target, AffineFunction) else target
    b_nodal = np.asarray(b_nodal, dtype=float)
    b_grid = discrete_extremal_affine(grid.weights, grid.nodes[:, None], grid.boundary)(
        grid.nodes[:, None]
    )
    s0_model = grid.curvature(np.zeros(grid.size))

    diagnostics = FlowDiagnostics()

    def row_for(state: FlowState, s: np.ndarray) -> Dict[str, float]:
        return {
            "t": state.time,
            "calabi_energy": calabi_energy(state, s_hat),
            "target_residual": _energy(grid, s, b_nodal),
            "F_Shat": mabuchi_F(s_hat, state),
            "F_B": mabuchi_F(b_grid, state),
            "extremal_residual": _energy(grid, s, b_grid),
            "L_Sv0": weighted_linear(s0_model, state.potential(), grid),
            "boundary_integral": _normalized_boundary_integral(state),
        }

    def emit(state: FlowState, s: np.ndarray) -> Dict[str, float]:
        row = row_for(state, s)
        diagnostics.record(row)
        for callback in callbacks:
            callback(state, row)
        return row

    state = state0
    s = scalar_curvature(state)
    emit(state, s)
    energy = _energy(grid, s, s_hat)
    f_shat = mabuchi_F(s_hat, state)
    f_b = mabuchi_F(b_grid, state)
    accepted = rejected = 0
    violations = {"calabi": 0, "mabuchi": 0, "f_b_bound": 0}
    worst_energy_rise = worst_f_b_excess = 0.0
    growth = {"L_Sv0": 0.0, "boundary_integral": 0.0}
    dt = grid.max_dt(state.smooth_part, opts.cfl)
    converged = False

    while state.time < t_end and accepted < opts.max_steps:
        dt = min(dt, grid.max_dt(state.smooth_part, opts.cfl), t_end - state.time)
        for _ in range(opts.max_halvings + 1):
            try:
                new_state, s_new = _checked_step(state, dt, s, opts.cfl)
                break
            except StepRejected as e:
                rejected += 1
                logger.debug(f"Step rejected at t = {state.time:.6g}: {e}")
                dt = e.suggested_dt
        else:
            logger.error(f"Step failed after {opts.max_halvings} halvings at t = {state.time:.6g}")
            raise ConvexityLoss(
                f"Step failed after {opts.max_halvings} halvings at t = {state.time:.6g}",
                details={"time": state.time, "dt": dt},
            )

        if np.abs(s_new).max() > opts.blowup_cap:
            logger.error(f"Scalar curvature exceeded {opts.blowup_cap:g} at t = {new_state.time:.6g}")
            raise BlowUpDetected(
                f"max|S| exceeded {opts.blowup_cap:g} at t = {new_state.time:.6g}",
                details={"time": new_state.time},
            )

        energy_new = _energy(grid, s_new, s_hat)
        if energy_new > energy + opts.energy_slack:
            violations["calabi"] += 1
            worst_energy_rise = max(worst_energy_rise, energy_new - energy)
        f_shat_new = mabuchi_F(s_hat, new_state)
        f_b_new = mabuchi_F(b_grid, new_state)
        scale = 1.0 + abs(f_b)
        if f_shat_new > f_shat + opts.energy_slack * scale:
            violations["mabuchi"] += 1
        bound = -float(grid.weights @ ((s_new - b_grid) * (s - b_grid)))
        excess = (f_b_new - f_b) / dt - bound
        if excess > opts.energy_slack * scale / dt:
            violations["f_b_bound"] += 1
            worst_f_b_excess = max(worst_f_b_excess, excess)

        state, s, energy, f_shat, f_b = new_state, s_new, energy_new, f_shat_new, f_b_new
        accepted += 1
        dt = 2.0 * dt
        ratio = 1.0 + state.time
        growth["L_Sv0"] = max(
            growth["L_Sv0"], abs(weighted_linear(s0_model, state.potential(), grid)) / ratio
        )
        growth["boundary_integral"] = max(
            growth["boundary_integral"], abs(_normalized_boundary_integral(state)) / ratio
        )
        if accepted % opts.record_every == 0:
            emit(state, s)
        if _energy(grid, s, b_nodal) < opts.target_tol:
            converged = True
            break

    if not diagnostics.rows or diagnostics.rows[-1]["t"] != state.time:
        emit(state, s)

    first = diagnostics.rows[0]
    diagnostics.summary = {
        "t_final": state.time,
        "accepted_steps": accepted,
        "rejected_steps": rejected,
        "converged": converged,
        "calabi_energy": float(diagnostics.rows[-1]["calabi_energy"]),
        "target_residual": float(diagnostics.rows[-1]["target_residual"]),
        "extremal_residual": float(diagnostics.rows[-1]["extremal_residual"]),
        "target": target.to_dict() if isinstance(target, AffineFunction) else "gridded",
        "s_hat": s_hat,
        "violations": violations,
        "worst_energy_rise": worst_energy_rise,
        "worst_f_b_excess": worst_f_b_excess,
        "max_L_Sv0_growth": max(growth["L_Sv0"], abs(first["L_Sv0"])),
        "max_boundary_growth": max(growth["boundary_integral"], abs(first["boundary_integral"])),
        "calabi_monotone": violations["calabi"] == 0,
    }
    logger.info(
        f"Flow finished at t = {state.time:.6g} after {accepted} steps "
        f"({rejected} rejected); ||S - B|| = {diagnostics.summary['target_residual']:.3e}"
    )
    return diagnostics, state
