"""Tests for the optimal destabiliser, the semistability test and certificates."""

import numpy as np
import pytest

from polystab.convexcone import SimpleCrease
from polystab.core.exceptions import ValidationError
from polystab.destabilizer import (
    SolverOptions,
    Verdict,
    brute_force_oracle,
    certificate_check,
    crease_search,
    e_membership_value,
    sample_E_members,
    semistability_test,
    solve_optimal_destabilizer,
)
from polystab.families import interval_mp
from polystab.geometry import parse_polytope
from polystab.quadrature import build_quadrature
from polystab.resources import list_examples


@pytest.fixture
def half_weighted_square():
    """Unit square whose left edge carries no boundary measure."""
    return parse_polytope({"dim": 2, "facets": [
        {"normal": [1, 0], "offset": 0, "sigma_weight": 0},
        {"normal": [0, 1], "offset": 0},
        {"normal": [-1, 0], "offset": -1},
        {"normal": [0, -1], "offset": -1},
    ]})


class TestSolverOptions:

    def test_from_config_reads_sections(self, default_config):
        default_config.set("destabilizer/rho", 0.5)
        default_config.set("cone/battery_size", 17)
        opts = SolverOptions.from_config()
        assert opts.rho == 0.5
        assert opts.battery_size == 17
        assert opts.crease_starts == (12, 8)

    def test_overrides_win_and_none_is_ignored(self):
        opts = SolverOptions.from_config(seed=9, battery_size=None)
        assert opts.seed == 9
        assert opts.battery_size == 200


class TestIntervals:

    def test_p1_is_stable(self, p1, fast_opts):
        result = solve_optimal_destabilizer(p1, build_quadrature(p1, 16), fast_opts)
        assert result.verdict is Verdict.STABLE
        assert result.phi_norm <= result.epsilon
        assert result.s_hat == pytest.approx(2.0)
        assert result.secondary["lp_value"] > 0
        assert result.witness is None

    def test_zero_weight_endpoint_is_unstable(self, fast_opts):
        mp = interval_mp(0)
        quad = build_quadrature(mp, 16)
        result = solve_optimal_destabilizer(mp, quad, fast_opts)
        x = quad.mesh_nodes[:, 0]
        assert result.verdict is Verdict.UNSTABLE
        assert np.allclose(result.phi.values, 3 - 6 * x, atol=1e-5)
        assert result.phi_norm ** 2 == pytest.approx(3.0, rel=1e-5)
        assert result.l_value == pytest.approx(-3.0, rel=1e-5)
        assert result.w_value == pytest.approx(-np.sqrt(3.0), rel=1e-5)
        assert np.allclose(result.b_density, 6 * x - 2, atol=1e-5)
        assert result.witness is result.phi
        assert result.phi.supporting_violation() <= 1e-6

    def test_certificates_pass(self, fast_opts):
        mp = interval_mp(0)
        result = solve_optimal_destabilizer(mp, build_quadrature(mp, 16), fast_opts)
        report = result.certificates
        assert report["passed"], report["failed"]
        assert result.trusted
        assert report["battery_size"] == 20
        assert report["exact_battery"]
        assert report["kkt_residual"] < 1e-6
        assert report["cone_min"] >= -1e-6

    def test_scale_invariance(self, fast_opts):
        mp = interval_mp(0)
        quad = build_quadrature(mp, 16)
        base = solve_optimal_destabilizer(mp, quad, fast_opts, certify=False)
        doubled = mp.scaled_weights(2)
        scaled = solve_optimal_destabilizer(doubled, build_quadrature(doubled, 16), fast_opts, certify=False)
        assert np.allclose(scaled.phi.values, 2 * base.phi.values, atol=1e-5)

    def test_extremal_density_is_semistable(self, fast_opts):
        mp = interval_mp(0)
        result = solve_optimal_destabilizer(mp, build_quadrature(mp, 16), fast_opts, density="extremal")
        assert result.phi_norm <= result.epsilon
        assert result.verdict is not Verdict.UNSTABLE

    def test_result_to_dict(self, p1, fast_opts):
        data = solve_optimal_destabilizer(p1, build_quadrature(p1, 8), fast_opts).to_dict()
        assert data["verdict"] == "stable"
        assert set(data["certificates"]) >= {"kkt_residual", "cone_min", "passed"}


class TestOracle:

    def test_interval_matches_admm(self, fast_opts):
        mp = interval_mp(0)
        oracle = brute_force_oracle(mp, resolution=2)
        admm = solve_optimal_destabilizer(mp, build_quadrature(mp, 2), fast_opts, certify=False)
        assert np.allclose(oracle.values, [3.0, 0.0, -3.0], atol=1e-6)
        assert np.allclose(admm.phi.values, oracle.values, atol=1e-5)

    def test_square_matches_admm(self, half_weighted_square, fast_opts):
        mp = half_weighted_square
        oracle = brute_force_oracle(mp, resolution=2)
        admm = solve_optimal_destabilizer(mp, build_quadrature(mp, 2), fast_opts, certify=False)
        assert admm.verdict is Verdict.UNSTABLE
        assert np.allclose(admm.phi.values, oracle.values, atol=1e-5)
        # every pair, not only mesh edges, must hold at the solution
        assert admm.phi.supporting_violation() <= 1e-6
        assert oracle.supporting_violation() <= 1e-6

    def test_node_cap(self, p1):
        with pytest.raises(ValidationError):
            brute_force_oracle(p1, resolution=8)

    @pytest.mark.parametrize("name", list_examples())
    def test_bundled_examples_match_admm(self, bundled, name, fast_opts):
        mp = bundled(name)
        resolution = 4 if mp.dim == 1 else 2
        oracle = brute_force_oracle(mp, resolution=resolution, density=mp.density_mode)
        quad = build_quadrature(mp, resolution)
        admm = solve_optimal_destabilizer(
            mp, quad, fast_opts, density=mp.density_mode, certify=False, classify=False
        )
        assert quad.mesh.norm(admm.phi.values - oracle.values) <= 1e-5


class TestCreaseSearch:

    def test_interval_crease_positive(self, p1):
        value, crease = crease_search(p1, 2, p1.centroid)
        assert value > 0
        assert isinstance(crease, SimpleCrease)

    def test_trapezium_crease_vanishes(self, trapezium):
        from polystab.functionals import extremal_affine

        value, crease = crease_search(trapezium, extremal_affine(trapezium), trapezium.centroid)
        assert abs(value) < 1e-6
        assert crease is not None


@pytest.mark.slow
class TestSemistability:

    def test_trapezium_is_strictly_semistable(self, trapezium, fast_opts):
        verdict, witness, result = semistability_test(trapezium, build_quadrature(trapezium, 4), fast_opts)
        assert result.phi_norm <= result.epsilon
        assert verdict is Verdict.SEMISTABLE_STRICT
        assert witness is not None

    def test_square_is_stable(self, square, fast_opts):
        verdict, witness, _ = semistability_test(square, build_quadrature(square, 4), fast_opts)
        assert verdict is Verdict.STABLE
        assert witness is None


class TestEMembers:

    def test_members_are_in_E(self, fast_opts):
        mp = interval_mp(0)
        quad = build_quadrature(mp, 16)
        result = solve_optimal_destabilizer(mp, quad, fast_opts, certify=False)
        members = sample_E_members(result, quad, 5, seed=3)
        assert members
        for h in members:
            value = e_membership_value(h, quad, mp.centroid)
            assert value is not None and value >= -1e-8

    def test_certificate_check_standalone(self, p1, fast_opts):
        quad = build_quadrature(p1, 8)
        result = solve_optimal_destabilizer(p1, quad, fast_opts, certify=False)
        report = certificate_check(result, p1, quad, battery_size=10, seed=5, opts=fast_opts)
        assert report["battery_seed"] == 5
        assert report["affine_part"] < 1e-6


@pytest.mark.slow
class TestAcceptance:

    def test_fine_interval_destabilizer(self):
        mp = interval_mp(0)
        quad = build_quadrature(mp, 64)
        opts = SolverOptions.from_config(battery_size=1000, seed=11)
        result = solve_optimal_destabilizer(mp, quad, opts)
        x = quad.mesh_nodes[:, 0]
        assert quad.mesh.norm(result.phi.values - (3 - 6 * x)) <= 1e-4
        report = result.certificates
        assert report["passed"], report["failed"]
        assert report["battery_size"] == 1000
        assert report["kkt_residual"] <= 1e-6
        assert report["scaling_residual"] <= 1e-6
        assert report["cone_min"] >= -1e-6
        assert report["orthogonality"] <= 1e-6

    @pytest.mark.parametrize("name", list_examples())
    def test_restarts_agree(self, bundled, name):
        mp = bundled(name)
        opts = SolverOptions.from_config(battery_size=20, seed=7, restarts=3)
        result = solve_optimal_destabilizer(
            mp, build_quadrature(mp), opts, density=mp.density_mode, certify=False
        )
        assert result.restart_spread <= 1e-4

    def test_destabilizer_is_closest_to_s_hat(self, bundled, fast_opts):
        mp = bundled("interval_w12")
        quad = build_quadrature(mp, 16)
        result = solve_optimal_destabilizer(mp, quad, fast_opts, certify=False)
        assert result.is_unstable
        members = sample_E_members(result, quad, 200, seed=13)
        assert members
        for h in members:
            assert quad.mesh.norm(h - result.s_hat) >= result.phi_norm - 1e-6

    def test_p2_is_stable(self, bundled, fast_opts):
        mp = bundled("p2")
        result = solve_optimal_destabilizer(mp, build_quadrature(mp, 4), fast_opts)
        assert result.verdict is Verdict.STABLE
        assert result.phi_norm <= 1e-7 * float(mp.vol_sigma)
        assert result.witness is None
