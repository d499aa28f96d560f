import json
from dataclasses import replace

import numpy as np
import pytest

from conftest import profiles, scenario_a, scenario_b
from handlemaslov.errors import SearchError
from handlemaslov.lagrangians import build_scenario_A, build_scenario_B
from handlemaslov.report import CheckReport
from handlemaslov.smoothfn import default_profiles, make_handle_profile, with_handle_profiles
from handlemaslov.verify import (
    RAY_MARGIN,
    check_handle_structure,
    check_patch,
    check_ray_disjoint,
    default_ray_direction,
    run_all,
    search_mu,
    without_perturbation,
)

SAMPLES = 2000


class TestReport:
    def test_add_max_and_lookup(self):
        rep = CheckReport()
        rep.add_max("a", [0.1, 0.3, 0.2], 0.5, witnesses=["x", "y", "z"])
        rep.add("b", False, 2.0, 1.0)
        assert rep["a"].passed and rep["a"].witness == "y"
        assert [e.name for e in rep.failures()] == ["b"]
        assert not rep.passed
        with pytest.raises(KeyError):
            rep["c"]
        json.loads(rep.to_json())


class TestHandle:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_defaults_pass(self, n):
        rep = check_handle_structure(profiles(), n, n_samples=SAMPLES)
        assert rep.passed, rep.summary()

    def test_sphere_critical_indices(self):
        rep = check_handle_structure(profiles(), 4, n_samples=SAMPLES)
        assert rep["sphere critical points"].note == "indices [0, 3]"
        assert rep["D1 critical points"].note == "indices [1]"

    def test_large_mu_fails(self):
        rep = check_handle_structure(replace(profiles(), mu=10.0), 3, n_samples=SAMPLES)
        assert not rep.passed

    def test_unperturbed_sphere_is_degenerate(self):
        rep = check_handle_structure(without_perturbation(profiles()), 3, n_samples=SAMPLES)
        assert not rep["sphere critical points"].passed

    def test_search_contract(self):
        p = profiles()
        mu = search_mu(p, 3)
        assert check_handle_structure(replace(p, mu=mu), 3).passed
        assert check_handle_structure(replace(p, mu=mu / 2), 3).passed
        assert not check_handle_structure(replace(p, mu=2 * mu), 3).passed

    def test_search_exhausted(self):
        with pytest.raises(SearchError):
            search_mu(without_perturbation(profiles()), 3, mu_min=0.2)

    def test_deterministic(self):
        a = check_handle_structure(profiles(), 3, n_samples=SAMPLES, seed=7).to_json()
        b = check_handle_structure(profiles(), 3, n_samples=SAMPLES, seed=7).to_json()
        assert a == b


class TestRay:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_default_ray_misses(self, n):
        rep = check_ray_disjoint(n, profiles())
        assert rep.passed, rep.summary()

    def test_plane_case_has_no_free_ray(self):
        # n = 1: the default direction is the diagonal, which L1 crosses at t = 0
        rep = check_ray_disjoint(1, profiles())
        assert rep["ray vs L1"].residual < 1e-12
        assert rep["ray vs L2"].passed

    def test_closest_approach_is_psi_zero(self):
        # the cylinders pass through (psi(0) q, +-psi(0) q); the ray stays psi(0) away
        p = profiles()
        rep = check_ray_disjoint(3, p)
        for name in ("ray vs L1", "ray vs L2"):
            assert rep[name].residual == pytest.approx(p.psi(0.0), rel=1e-4)

    def test_wide_margin_cannot_be_certified(self):
        rep = check_ray_disjoint(3, profiles(), margin=0.1)
        assert not rep.passed

    def test_ray_into_cylinder_fails(self):
        z0 = np.concatenate([np.eye(3)[0], np.zeros(3)])
        rep = check_ray_disjoint(3, profiles(), z0=z0)
        assert rep["ray vs L1"].residual < 1e-8

    def test_default_direction(self):
        z0 = default_ray_direction(3)
        assert np.linalg.norm(z0) == pytest.approx(1.0)
        assert RAY_MARGIN > 0


class TestRunAll:
    def test_scenario_a_passes(self):
        rep = run_all(scenario_a(3), handle_samples=SAMPLES)
        assert rep.passed, rep.summary()
        assert any(e.name.startswith("ray: ") for e in rep.entries)
        assert any(e.name.startswith("handle: ") for e in rep.entries)

    @pytest.mark.parametrize("n", [2, 4])
    def test_scenario_b_passes(self, n):
        rep = run_all(scenario_b(n))
        assert rep.passed, rep.summary()
        assert bool(rep.warnings) == (n == 2)

    def test_n2_warning_forwarded(self):
        rep = run_all(scenario_a(2), handle=False, ray=False)
        assert rep.passed and rep.warnings

    def test_theta_offset_breaks_primitive_gluing(self):
        sc = build_scenario_B(3, default_profiles(epsilon=0.05), theta_offset=0.1)
        rep = run_all(sc)
        assert [e.name for e in rep.failures()] == ["junction F5->F1 primitive"]
        assert rep["junction F5->F1 primitive"].residual == pytest.approx(0.1 * (0.5 - 0.05), rel=1e-6)

    def test_handle_end_mismatch_breaks_primitive_gluing(self):
        p = default_profiles()
        g1, g2 = p.g_handle
        bad = with_handle_profiles(p, make_handle_profile(g1(-1.0), 0.2, name="g1"), g2, rebuild_r=True)
        rep = run_all(build_scenario_A(3, bad), handle=False, ray=False)
        assert [e.name for e in rep.failures()] == ["junction K1->L1 primitive"]

    def test_patch_check_catches_non_exact(self):
        patch = scenario_b(3).patches["F2"]
        broken = replace(patch, primitive_dt=lambda t: 0.0 * np.asarray(t))
        rep = check_patch(broken, n_t=40, n_q=8)
        assert not rep["exact F2"].passed
        assert rep["lagrangian F2"].passed
