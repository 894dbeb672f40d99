"""Tests for convex grid functions, the discrete cone and test batteries."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polystab.convexcone import (
    ConvexGridFunction,
    SimpleCrease,
    all_pairs,
    grid_function_from_values,
    is_convex_extendable,
    mesh_edge_pairs,
    normalize,
    norm_inequality_constant,
    pairwise_violation,
    sample_cone,
    supporting_plane_rows,
)
from polystab.core.exceptions import DegenerateNodeSet, ValidationError
from polystab.functionals import AffineFunction, PLConvexFunction
from polystab.quadrature import build_quadrature


class TestConvexExtendable:

    def test_concave_bump(self):
        ok, witness = is_convex_extendable(np.array([0.0, 1.0, 0.0]), np.array([[0.0], [0.5], [1.0]]))
        assert not ok
        assert 1 in witness

    def test_parabola(self):
        x = np.linspace(0, 1, 5)[:, None]
        ok, subgradients = is_convex_extendable(x[:, 0] ** 2, x)
        assert ok
        assert subgradients.shape == (5, 1)

    def test_degenerate(self):
        with pytest.raises(DegenerateNodeSet):
            is_convex_extendable(np.zeros(3), np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))

    @given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(-0.5, 0.5))
    def test_convex_quadratics_in_2d(self, a, b, c):
        pts = np.array([[i / 3, j / 3] for i in range(4) for j in range(4)])
        cross = c * np.sqrt(a * b)
        values = a * pts[:, 0] ** 2 + b * pts[:, 1] ** 2 + 2 * cross * pts[:, 0] * pts[:, 1]
        ok, _ = is_convex_extendable(values, pts)
        assert ok


class TestSupportingPlaneRows:

    def test_shape_and_columns(self):
        nodes = np.array([[0.0], [0.5], [1.0]])
        rows = supporting_plane_rows(nodes, np.array([[0, 1]]))
        assert rows.shape == (1, 6)
        assert np.allclose(rows.toarray(), [[1.0, -1.0, 0.0, 0.0, 0.5, 0.0]])

    def test_all_pairs(self):
        pairs = all_pairs(4)
        assert len(pairs) == 12
        assert not np.any(pairs[:, 0] == pairs[:, 1])

    def test_edge_pairs_both_directions(self, p1):
        mesh = build_quadrature(p1, 4).mesh
        pairs = mesh_edge_pairs(mesh)
        assert len(pairs) == 8
        assert {tuple(p) for p in pairs} >= {(0, 1), (1, 0)}

    def test_tilted_bowl_is_admitted_on_the_square(self, square):
        # convex but not P1-convex on the Freudenthal diagonals
        mesh = build_quadrature(square, 2).mesh
        nodes = mesh.nodes
        t = nodes.sum(axis=1)
        values = t ** 2
        subgradients = np.column_stack([2 * t, 2 * t])
        rows = supporting_plane_rows(nodes, all_pairs(mesh.size))
        assert (rows @ np.concatenate([values, subgradients.ravel()])).min() >= -1e-12
        ok, _ = is_convex_extendable(values, nodes)
        assert ok

    def test_rows_match_pairwise_violation(self):
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        values = np.array([0.0, 1.0, 0.5, 2.0])
        subgradients = np.array([[1.0, 0.5], [0.0, 0.0], [1.0, 1.0], [2.0, 1.0]])
        pairs = all_pairs(4)
        rows = supporting_plane_rows(nodes, pairs)
        gap = pairwise_violation(values, subgradients, nodes)
        assert np.allclose(rows @ np.concatenate([values, subgradients.ravel()]), -gap[pairs[:, 0], pairs[:, 1]])


class TestGridFunctions:

    def test_from_values_is_supporting(self, square):
        quad = build_quadrature(square, 4)
        values = np.maximum(2 * quad.mesh_nodes[:, 0] - 1, 0)
        f = grid_function_from_values(values, quad)
        assert f.supporting_violation() <= 1e-12

    def test_normalize_is_idempotent(self, p1):
        quad = build_quadrature(p1, 16)
        nodes = quad.mesh_nodes
        values = nodes[:, 0] ** 2
        f = ConvexGridFunction(values, 2 * nodes, nodes, np.array([0.5]))
        once = normalize(f)
        twice = normalize(once)
        assert np.allclose(once.values, (nodes[:, 0] - 0.5) ** 2)
        assert np.allclose(once.values, twice.values)

    def test_frame_round_trip(self, square):
        quad = build_quadrature(square, 2)
        f = grid_function_from_values((quad.mesh_nodes ** 2).sum(axis=1), quad)
        back = ConvexGridFunction.from_frame(f.to_frame())
        assert np.allclose(back.values, f.values)
        assert np.allclose(back.subgradients, f.subgradients)


class TestSampleCone:

    def test_deterministic(self, square):
        quad = build_quadrature(square, 3)
        first = sample_cone(square, 12, seed=3, quad=quad)
        second = sample_cone(square, 12, seed=3, quad=quad)
        assert len(first) == 12
        for a, b in zip(first, second):
            assert np.array_equal(a.values, b.values)

    def test_members_are_normalized(self, trapezium):
        quad = build_quadrature(trapezium, 4)
        battery = sample_cone(trapezium, 15, seed=1, quad=quad)
        assert battery[0].analytic.kind == "crease"
        for f in battery:
            assert f.values.min() >= -1e-9
            boundary = quad.mesh.integrate_boundary(f.values)
            assert boundary == pytest.approx(1.0) or boundary <= 1e-14
            assert np.allclose(f.analytic(quad.mesh_nodes), f.values, atol=1e-9)

    def test_count_must_be_positive(self, p1):
        with pytest.raises(ValidationError):
            sample_cone(p1, 0)

    def test_norm_inequality_constant(self, square):
        quad = build_quadrature(square, 3)
        constant, worst = norm_inequality_constant(sample_cone(square, 20, quad=quad), quad)
        assert constant >= 1.0
        assert 0.0 < worst <= 1.0


class TestSimpleCrease:

    def test_as_function_matches_samples(self, p1):
        crease = SimpleCrease(AffineFunction([2], -1))
        exact = crease.as_function()
        assert isinstance(exact, PLConvexFunction)
        x = np.linspace(0, 1, 9)[:, None]
        assert np.allclose(exact(x), crease(x))
        assert exact.exact_norm(p1) == pytest.approx(np.sqrt(1 / 6))
