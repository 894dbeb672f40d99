"""Tests for linearity-region detection, piece extraction and the trapezium family."""

import numpy as np
import pytest
import sympy as sp

from polystab.convexcone import grid_function_from_values
from polystab.core.exceptions import CreaseResolutionFailure, NotPiecewiseLinear, NotUnstable, ValidationError
from polystab.decomposition import (
    GradientCluster,
    check_coverage,
    concavity_check,
    decompose,
    detect_piecewise_linear,
    extract_pieces,
    trapezium_mp,
    trapezium_reference,
    verify_piece,
)
from polystab.destabilizer import Verdict
from polystab.functionals import AffineFunction
from polystab.quadrature import build_quadrature

R = sp.Rational


@pytest.fixture
def crease_on_square(square):
    """max(0, 2x - 1) on the unit square, sampled on an even mesh."""
    quad = build_quadrature(square, 4)
    values = np.maximum(2 * quad.mesh_nodes[:, 0] - 1, 0)
    return quad, grid_function_from_values(values, quad)


class TestDetection:

    def test_two_clusters(self, crease_on_square):
        quad, phi = crease_on_square
        pl, clusters = detect_piecewise_linear(phi, quad)
        assert pl
        assert len(clusters) == 2
        assert np.allclose(clusters[0].affine.grad_array, [0.0, 0.0])
        assert np.allclose(clusters[1].affine.grad_array, [2.0, 0.0])
        assert all(c.residual < 1e-12 for c in clusters)

    def test_smooth_function_is_not_pl(self, square):
        quad = build_quadrature(square, 4)
        values = (quad.mesh_nodes ** 2).sum(axis=1)
        pl, clusters = detect_piecewise_linear(grid_function_from_values(values, quad), quad)
        assert not pl
        assert len(clusters) > 1

    def test_affine_function_is_one_cluster(self, trapezium):
        quad = build_quadrature(trapezium, 3)
        values = quad.mesh_nodes @ np.array([1.0, -2.0]) + 0.5
        pl, clusters = detect_piecewise_linear(grid_function_from_values(values, quad), quad)
        assert pl and len(clusters) == 1


class TestPieces:

    def test_halves(self, square, crease_on_square):
        quad, phi = crease_on_square
        _, clusters = detect_piecewise_linear(phi, quad)
        pieces = extract_pieces(phi, square, clusters)
        assert len(pieces) == 2
        assert [p.volume for p in pieces] == pytest.approx([0.5, 0.5])
        left, right = pieces
        assert left.local_density.constant_float == pytest.approx(4.0)
        assert right.local_density.grad_array == pytest.approx([-2.0, 0.0])
        assert any(f.cut and f.sigma_weight == 0 for f in left.subpolytope.facets)
        assert float(left.subpolytope.vol_sigma) == pytest.approx(2.0)

    def test_coverage_and_concavity(self, square, crease_on_square):
        quad, phi = crease_on_square
        _, clusters = detect_piecewise_linear(phi, quad)
        pieces = extract_pieces(phi, square, clusters)
        coverage = check_coverage(square, pieces)
        assert coverage["ok"]
        assert coverage["volume_gap"] < 1e-10
        assert concavity_check(pieces)

    def test_no_clusters(self, square, crease_on_square):
        _, phi = crease_on_square
        with pytest.raises(NotPiecewiseLinear):
            extract_pieces(phi, square, [])

    def test_overlapping_clusters(self, square, crease_on_square):
        quad, phi = crease_on_square
        everything = np.arange(quad.mesh.size)
        elements = np.arange(len(quad.mesh.elements))
        clusters = [
            GradientCluster(elements, everything, AffineFunction([0.0, 0.0], 0.0), 0.0),
            GradientCluster(elements, everything, AffineFunction([2.0, 0.0], -1.0), 0.0),
        ]
        with pytest.raises(CreaseResolutionFailure):
            extract_pieces(phi, square, clusters)

    def test_verify_piece(self, square, crease_on_square, fast_opts):
        quad, phi = crease_on_square
        _, clusters = detect_piecewise_linear(phi, quad)
        piece = extract_pieces(phi, square, clusters)[0]
        verdict = verify_piece(piece, resolution=3, opts=fast_opts)
        assert isinstance(verdict, Verdict)
        assert piece.verdict is verdict
        assert piece.extremal is not None
        assert piece.density_gap >= 0.0
        assert piece.to_dict()["verdict"] == verdict.value


class TestDecompose:

    def test_pipeline_without_verification(self, square, crease_on_square):
        quad, phi = crease_on_square
        report = decompose(square, phi, quad, verify=False)
        assert report.pl_detected
        assert len(report.pieces) == 2
        assert report.histogram == sorted(report.histogram, reverse=True)
        assert sum(report.histogram) == len(quad.mesh.elements)
        rows = report.node_table()
        assert {r["piece"] for r in rows} == {0, 1}
        assert report.to_dict()["coverage"]["ok"]

    def test_vanishing_phi(self, square):
        quad = build_quadrature(square, 3)
        phi = grid_function_from_values(np.zeros(quad.mesh.size), quad)
        with pytest.raises(NotUnstable):
            decompose(square, phi, quad, require_unstable=True)

    def test_not_pl_keeps_histogram(self, square):
        quad = build_quadrature(square, 4)
        values = (quad.mesh_nodes ** 2).sum(axis=1)
        report = decompose(square, grid_function_from_values(values, quad), quad)
        assert not report.pl_detected
        assert report.pieces == []
        assert report.histogram


class TestTrapezium:

    def test_geometry(self):
        mp = trapezium_mp(2)
        assert mp.volume == R(3, 2)
        assert mp.vol_sigma == 3
        assert mp.density_mode == "extremal"

    def test_square_case_is_constant(self):
        reference = trapezium_reference(1)
        assert reference["A"].gradient == (0, 0)
        assert reference["A"].constant == 2

    @pytest.mark.parametrize("l", [1, 2])
    def test_creases_vanish(self, l):
        reference = trapezium_reference(l)
        assert len(reference["crease_values"]) == 9
        assert all(value == 0 for value in reference["crease_values"].values())

    def test_kernel_slack_is_non_negative(self):
        slack = trapezium_reference(2)["kernel_slack"]
        assert slack[0] == 0
        assert all(value >= 0 for value in slack.values())
        assert float(slack[R(1, 2)]) > 0

    def test_square_kernel_slack(self):
        slack = trapezium_reference(1, ts=["1/4"])["kernel_slack"]
        assert slack[R(1, 4)] == R(3, 16)

    @pytest.mark.parametrize("l", [0, -1, "-1/2"])
    def test_non_positive_height(self, l):
        with pytest.raises(ValidationError):
            trapezium_mp(l)
        with pytest.raises(ValidationError):
            trapezium_reference(l)
