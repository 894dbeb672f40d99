"""Tests for affine densities, L_A and the extremal affine function."""

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from polystab.core.exceptions import NodeEvaluationFailure
from polystab.decomposition import trapezium_mp, trapezium_reference
from polystab.families import interval_mp
from polystab.functionals import (
    AffineFunction,
    PLConvexFunction,
    crease_functional,
    discrete_extremal_affine,
    eval_L,
    extremal_affine,
    project_affine,
)
from polystab.quadrature import build_quadrature

R = sp.Rational


class TestAffineFunction:

    def test_exact_arithmetic(self):
        f = AffineFunction(["1/2", 1], "1/3")
        g = AffineFunction([R(1, 2), -1], 0)
        total = f + g
        assert total.exact
        assert total.gradient == (1, 0)
        assert total.constant == R(1, 3)

    def test_mixed_falls_back_to_float(self):
        total = AffineFunction([1], R(1, 2)) + AffineFunction([0.5], 0.0)
        assert not total.exact
        assert total.gradient == (1.5,)

    def test_call(self):
        f = AffineFunction([2, -1], 1)
        assert np.allclose(f(np.array([[0.0, 0.0], [1.0, 1.0]])), [1.0, 2.0])
        assert f.evaluate_exact([R(1, 2), 1]) == 1

    @given(st.fractions(max_denominator=20), st.fractions(max_denominator=20))
    def test_scaling_stays_exact(self, a, c):
        f = AffineFunction([str(a)], str(c)) * 3
        assert f.exact
        assert f.gradient[0] == 3 * R(str(a))


class TestExtremalAffine:

    def test_interval_zero_one(self):
        a = extremal_affine(interval_mp(0))
        assert a.gradient == (6,)
        assert a.constant == -2

    def test_interval_half_one(self):
        a = extremal_affine(interval_mp("1/2"))
        assert a.gradient == (3,)
        assert a.constant == 0

    def test_p1_is_constant(self, p1):
        a = extremal_affine(p1)
        assert a.gradient == (0,)
        assert a.constant == 2

    def test_trapezium(self, trapezium):
        a = extremal_affine(trapezium)
        assert a.gradient == (R(36, 13), 0)
        assert a.constant == R(6, 13)

    @pytest.mark.parametrize("l", ["1/2", "1", "2", "3"])
    def test_trapezium_closed_form(self, l):
        a = extremal_affine(trapezium_mp(l))
        reference = trapezium_reference(l, us=[], ts=[])["A"]
        assert a.gradient == reference.gradient
        assert a.constant == reference.constant

    def test_annihilates_affine_functions(self, trapezium):
        a = extremal_affine(trapezium)
        for h in (AffineFunction([0, 0], 1), AffineFunction([1, 0], 0), AffineFunction([0, 1], 0)):
            value = PLConvexFunction([], affine=h, dim=2).exact_L(trapezium, a).value
            assert value == 0

    def test_discrete_matches_continuous_on_affine_data(self, bundled):
        mp = bundled("interval_w12")
        quad = build_quadrature(mp, 64)
        mesh = quad.mesh
        a = discrete_extremal_affine(mesh.lumped, mesh.nodes, mesh.boundary_weights)
        assert a.grad_array[0] == pytest.approx(3.0, abs=1e-2)
        assert a.constant_float == pytest.approx(0.0, abs=1e-2)


class TestEvalL:

    def test_crease_example(self, p1):
        quad = build_quadrature(p1, 16)
        value = eval_L(2, lambda x: np.maximum(2 * x[:, 0] - 1, 0), quad)
        assert value.value == pytest.approx(0.5)

    def test_nodal_values(self, p1):
        quad = build_quadrature(p1, 16)
        values = np.maximum(2 * quad.mesh_nodes[:, 0] - 1, 0)
        assert eval_L(2, values, quad).value == pytest.approx(0.5)

    def test_exact_crease(self, p1):
        assert crease_functional(p1, 2, AffineFunction([2], -1)).value == R(1, 2)

    def test_bad_shape(self, p1):
        quad = build_quadrature(p1, 4)
        with pytest.raises(NodeEvaluationFailure):
            eval_L(2, np.zeros(3), quad)

    def test_callable_failure(self, p1):
        quad = build_quadrature(p1, 4)
        with pytest.raises(NodeEvaluationFailure):
            eval_L(2, lambda x: np.full(len(x), np.nan), quad)


class TestPLConvexFunction:

    def test_crease_norm(self, p1):
        f = PLConvexFunction.crease(AffineFunction([2], -1))
        assert f.exact_norm(p1) == pytest.approx(np.sqrt(1 / 6))

    def test_exact_projection_of_crease(self, p1):
        fit = PLConvexFunction.crease(AffineFunction([2], -1)).exact_projection(p1)
        assert fit.grad_array[0] == pytest.approx(1.0)
        assert fit.constant_float == pytest.approx(-0.25)

    def test_linear_regions_cover(self, square):
        f = PLConvexFunction([(1, [AffineFunction([1, 0], 0), AffineFunction([0, 1], 0)])], dim=2)
        regions = f.linear_regions(square)
        assert len(regions) == 2
        assert sum(region.volume for region, _ in regions) == 1

    def test_normalized_vanishes_at_base_point(self, square):
        f = PLConvexFunction([(1, [AffineFunction([1, 0], 0), AffineFunction([0, 1], 0)])], dim=2)
        g = f.normalized([0.25, 0.75])
        assert g(np.array([[0.25, 0.75]]))[0] == pytest.approx(0.0)
        assert np.all(g(np.random.default_rng(0).random((50, 2))) >= -1e-12)

    def test_projection_of_square(self, p1):
        quad = build_quadrature(p1, 64)
        fit = project_affine(quad.mesh_nodes[:, 0] ** 2, quad)
        assert fit.grad_array[0] == pytest.approx(1.0, abs=1e-3)
        assert fit.constant_float == pytest.approx(-1 / 6, abs=1e-3)
