"""Tests for polytope parsing, scalar summaries, moments and clipping."""

import json

import numpy as np
import pytest
import sympy as sp

from polystab.core.exceptions import (
    DegreeUnsupported,
    EmptyInterior,
    MalformedDocument,
    NonPrimitiveNormal,
    UnboundedPolytope,
)
from polystab.geometry import (
    Facet,
    canonical_facet_density,
    moments,
    parse_polytope,
    product_integral,
    region_integral,
    scalar_summary,
)
from polystab.resources import list_examples

R = sp.Rational


class TestParse:

    def test_interval_vertices(self):
        mp = parse_polytope({"dim": 1, "facets": [
            {"normal": [1], "offset": 0}, {"normal": [-1], "offset": -1}]})
        assert len(mp.vertices) == 2
        assert mp.exact

    def test_rational_weights(self, bundled):
        mp = bundled("interval_w12")
        assert mp.weights == [R(1, 2), 1]
        assert mp.density_mode == "extremal"
        assert mp.resolution == 16

    def test_text_and_path(self, tmp_path):
        doc = {"dim": 1, "facets": [{"normal": [1], "offset": 0}, {"normal": [-1], "offset": -2}]}
        path = tmp_path / "interval.json"
        path.write_text(json.dumps(doc))
        assert parse_polytope(path).volume == 2
        assert parse_polytope(json.dumps(doc)).volume == 2

    def test_non_primitive_normal(self):
        with pytest.raises(NonPrimitiveNormal) as info:
            parse_polytope({"dim": 2, "facets": [
                {"normal": [1, 0], "offset": 0},
                {"normal": [0, 2], "offset": 0},
                {"normal": [-1, -1], "offset": -1},
            ]})
        assert info.value.facet_index == 1

    def test_unbounded(self):
        with pytest.raises(UnboundedPolytope):
            parse_polytope({"dim": 2, "facets": [
                {"normal": [1, 0], "offset": 0},
                {"normal": [0, 1], "offset": 0},
                {"normal": [1, 1], "offset": 1},
            ]})

    def test_empty(self):
        with pytest.raises(EmptyInterior):
            parse_polytope({"dim": 1, "facets": [
                {"normal": [1], "offset": 1}, {"normal": [-1], "offset": 0}]})

    @pytest.mark.parametrize("doc", [
        {"facets": []},
        {"dim": 1, "facets": [{"normal": [1], "offset": 0}]},
        {"dim": 1, "facets": [{"normal": [1], "offset": 0}, {"normal": [-1], "offset": -1}],
         "density": "weird"},
        {"dim": 1, "facets": [{"normal": ["1/2"], "offset": 0}, {"normal": [-1], "offset": -1}]},
        {"dim": 1, "facets": [{"normal": [1], "offset": 0, "sigma_weight": -1},
                              {"normal": [-1], "offset": -1}]},
    ])
    def test_malformed(self, doc):
        with pytest.raises(MalformedDocument):
            parse_polytope(doc)

    def test_every_bundled_example_parses(self, bundled):
        for name in list_examples():
            mp = bundled(name)
            assert mp.volume > 0

    def test_document_round_trip(self, trapezium):
        again = parse_polytope(trapezium.to_document())
        assert again.volume == trapezium.volume
        assert again.vol_sigma == trapezium.vol_sigma


class TestScalarSummary:

    def test_p1(self, p1):
        summary = scalar_summary(p1)
        assert summary.s_hat == 2

    def test_standard_triangle(self, triangle):
        summary = scalar_summary(triangle)
        assert summary.vol_mu == R(1, 2)
        assert summary.vol_sigma == 3
        assert summary.s_hat == 6

    def test_square(self, square):
        assert scalar_summary(square).s_hat == 4

    def test_to_dict_exact(self, triangle):
        data = scalar_summary(triangle).to_dict()
        assert data["vol_mu"] == {"exact": "1/2", "float": 0.5}

    def test_scaled_weights(self, triangle):
        assert triangle.scaled_weights(2).vol_sigma == 6


class TestMoments:

    def test_trapezium(self, trapezium):
        table = moments(trapezium)
        assert table.interior[(0, 0)] == R(3, 2)
        assert table.interior[(1, 0)] == R(5, 6)
        assert table.boundary[(0, 0)] == 3
        assert table.boundary[(1, 0)] == 2
        assert table.boundary[(0, 1)] == R(5, 2)

    def test_degree_cap(self, trapezium):
        with pytest.raises(DegreeUnsupported):
            moments(trapezium, 3)

    def test_square_second_moment(self, square):
        assert moments(square).interior[(2, 0)] == R(1, 3)
        assert moments(square).interior[(1, 1)] == R(1, 4)

    def test_region_integral_with_density(self, p1):
        interior, boundary = region_integral(p1, ([1], 0), ([0], 2))
        assert interior == 1
        assert boundary == 1

    def test_product_integral_float(self, square):
        value = product_integral(square, ([1.0, 0.0], 0.0), ([0.0, 1.0], 0.0))
        assert value == pytest.approx(0.25)


class TestClip:

    def test_half_square(self, square):
        half = square.clip([1, 0], R(-1, 2))
        assert half.volume == R(1, 2)
        assert half.vol_sigma == 2
        cut = [f for f in half.facets if f.cut]
        assert len(cut) == 1 and cut[0].sigma_weight == 0

    def test_clip_outside_is_none(self, square):
        assert square.clip([1, 0], -2) is None

    def test_clip_containing_is_identity(self, square):
        assert square.clip([1, 0], 1) is square

    def test_centroid(self, trapezium):
        assert np.allclose(trapezium.centroid, [5 / 9, 7 / 9])

    def test_contains(self, square):
        assert list(square.contains([[0.5, 0.5], [2.0, 0.0], [1.0, 1.0]])) == [True, False, True]


class TestFacetsFromVertices:

    def test_trapezium(self, trapezium):
        rebuilt = set(trapezium.to_vertex_facets())
        assert rebuilt == {((1, 0), 0), ((-1, 0), -1), ((0, 1), 0), ((1, -1), -1)}

    def test_interval(self, p1):
        assert p1.to_vertex_facets() == [((-1,), -1), ((1,), 0)]

    def test_canonical_density(self):
        diagonal = canonical_facet_density(Facet([-1, -1], -1))
        assert sp.simplify(diagonal - 1 / sp.sqrt(2)) == 0
        assert canonical_facet_density(Facet([0, 1], 0)) == 1
