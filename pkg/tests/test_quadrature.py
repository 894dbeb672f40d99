"""Tests for meshes and quadrature rules."""

import numpy as np
import pytest

from polystab.core.exceptions import ResolutionTooSmall
from polystab.quadrature import build_quadrature, graded_parameters


class TestGradedParameters:

    def test_uniform(self):
        assert np.allclose(graded_parameters(4, 1.0), [0, 0.25, 0.5, 0.75, 1])

    @pytest.mark.parametrize("grading", [1.5, 2.0, 3.0])
    def test_graded_symmetric_and_monotone(self, grading):
        s = graded_parameters(8, grading)
        assert s[0] == 0 and s[-1] == 1
        assert np.all(np.diff(s) > 0)
        assert np.allclose(s, 1 - s[::-1])
        assert s[1] < 1 / 8


class TestQuadrature:

    def test_resolution_too_small(self, square):
        with pytest.raises(ResolutionTooSmall):
            build_quadrature(square, 1)

    def test_document_resolution_is_default(self, p1):
        assert build_quadrature(p1).mesh.resolution == 16

    def test_square_weights(self, square):
        quad = build_quadrature(square, 2)
        assert quad.interior_weights.sum() == pytest.approx(1.0)
        assert quad.mesh.lumped.sum() == pytest.approx(1.0)
        assert quad.mesh.boundary_weights.sum() == pytest.approx(4.0)

    def test_degree_two_exactness(self, square):
        quad = build_quadrature(square, 3)
        x = quad.interior_nodes
        assert quad.integrate_interior(x[:, 0] ** 2) == pytest.approx(1 / 3)
        assert quad.integrate_interior(x[:, 0] * x[:, 1]) == pytest.approx(1 / 4)

    def test_mass_matrix_volume(self, trapezium):
        quad = build_quadrature(trapezium, 4)
        ones = np.ones(quad.mesh.size)
        assert quad.mesh.inner(ones, ones) == pytest.approx(1.5)

    def test_boundary_moments(self, trapezium):
        quad = build_quadrature(trapezium, 4)
        mesh = quad.mesh
        assert mesh.integrate_boundary(np.ones(mesh.size)) == pytest.approx(3.0)
        assert mesh.integrate_boundary(mesh.nodes[:, 0]) == pytest.approx(2.0)
        assert mesh.integrate_boundary(mesh.nodes[:, 1]) == pytest.approx(2.5)
        assert quad.integrate_boundary(quad.boundary_nodes[:, 1]) == pytest.approx(2.5)

    def test_graded_interval(self, p1):
        quad = build_quadrature(p1, 8, grading=2.0)
        nodes = quad.mesh_nodes[:, 0]
        assert nodes[0] == 0 and nodes[-1] == 1
        assert quad.mesh.lumped.sum() == pytest.approx(1.0)
        assert quad.mesh.boundary_weights[[0, -1]] == pytest.approx([1.0, 1.0])

    def test_element_gradients_of_affine(self, triangle):
        quad = build_quadrature(triangle, 3)
        values = 2 * quad.mesh_nodes[:, 0] - quad.mesh_nodes[:, 1] + 1
        grads = quad.mesh.element_gradients(values)
        assert np.allclose(grads, [2.0, -1.0])

    def test_to_dict(self, square):
        data = build_quadrature(square, 2).to_dict()
        assert data["resolution"] == 2
        assert data["exactness_degree"] == 2
