"""
Custom exception classes for polystab.

Provides a hierarchy of domain-specific exceptions for consistent error handling
across the library and the command line front end.
"""

from typing import Any, Dict, Optional


class PolystabError(Exception):
    """Base exception for all polystab errors."""

    def __init__(self, message: str = "", details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details: Dict[str, Any] = dict(details or {})


class ValidationError(PolystabError):
    """Raised when input validation fails."""
    pass


class ConfigError(PolystabError):
    """Raised when configuration operations fail."""
    pass


class FileOperationError(PolystabError):
    """Raised when file operations fail."""
    pass


class ExportError(PolystabError):
    """Raised when writing a report, table or plot fails."""
    pass


# Geometry

class GeometryError(PolystabError):
    """Base class for polytope construction and integration errors."""
    pass


class MalformedDocument(GeometryError, ValidationError):
    """Raised when a polytope document is structurally invalid."""
    pass


class UnboundedPolytope(GeometryError):
    """Raised when the facet inequalities do not bound a polytope."""
    pass


class EmptyInterior(GeometryError):
    """Raised when the polytope is empty or lower dimensional."""
    pass


class NonPrimitiveNormal(GeometryError):
    """Raised when a facet normal is not a primitive integral vector."""

    def __init__(self, message: str = "", facet_index: Optional[int] = None):
        super().__init__(message, {"facet_index": facet_index})
        self.facet_index = facet_index


class ResolutionTooSmall(GeometryError, ValidationError):
    """Raised when a mesh resolution below 2 is requested."""
    pass


class DegreeUnsupported(GeometryError, ValidationError):
    """Raised when moments above degree 2 are requested."""
    pass


class SingularMomentMatrix(GeometryError):
    """Raised when the degree-1 moment Gram matrix cannot be inverted."""
    pass


class DegenerateNodeSet(GeometryError):
    """Raised when a node set does not affinely span the ambient space."""
    pass


# Evaluation

class EvaluationError(PolystabError):
    """Base class for failures while evaluating functions or functionals."""
    pass


class NodeEvaluationFailure(EvaluationError):
    """Raised when a field cannot be evaluated at the quadrature nodes."""
    pass


class NonConvexPotential(EvaluationError):
    """Raised when a potential has a non-positive Hessian determinant at a node."""
    pass


# Solvers

class SolverError(PolystabError):
    """Base class for optimization failures."""
    pass


class SolverDiverged(SolverError):
    """Raised when an iterative solver exhausts its iteration budget."""
    pass


class InfeasibleStart(SolverError):
    """Raised when the convex cone program has no feasible starting point."""
    pass


class CertificateFailure(SolverError):
    """Raised when optimality certificates exceed their tolerances."""
    pass


# Decomposition

class DecompositionError(PolystabError):
    """Base class for decomposition failures."""
    pass


class CreaseResolutionFailure(DecompositionError):
    """Raised when linearity regions overlap beyond tolerance."""
    pass


class NotUnstable(DecompositionError):
    """Raised when a decomposition is requested for a semistable input."""
    pass


class NotPiecewiseLinear(DecompositionError):
    """Raised when the destabilizer is not resolved as piecewise linear."""
    pass


# Calabi flow

class FlowError(PolystabError):
    """Base class for Calabi flow failures."""
    pass


class NonConvexStart(FlowError):
    """Raised when the initial potential is not strictly convex."""
    pass


class ZeroWeightEndpoint(FlowError, ValidationError):
    """Raised when a flow is requested on an interval with a zero endpoint weight."""
    pass


class ConvexityLoss(FlowError):
    """Raised when a step cannot keep the potential strictly convex."""
    pass


class StepRejected(FlowError):
    """Raised when a single step is rejected; carries a smaller step to retry with."""

    def __init__(self, message: str = "", suggested_dt: Optional[float] = None):
        super().__init__(message, {"suggested_dt": suggested_dt})
        self.suggested_dt = suggested_dt


class BlowUpDetected(FlowError):
    """Raised when the scalar curvature exceeds the configured cap."""
    pass
