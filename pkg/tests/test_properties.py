"""Invariants of the phase pipeline, partly driven by hypothesis."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import special_ortho_group

from conftest import indices_a, profiles, scenario_a, scenario_b
from handlemaslov.maslov import SNAP_LIMIT, epsilon_sweep, phase_trace, winding
from handlemaslov.spaces import sphere_tangent_basis

CASES = [("A", n, name) for n in (3, 4) for name in ("gamma1", "sigma1", "gamma2", "sigma2")]
CASES += [("B", n, f"gamma{i}") for n in (3, 4) for i in range(1, 6)]


def segment(case):
    kind, n, name = case
    return (scenario_a(n) if kind == "A" else scenario_b(n)).segment(name)


@pytest.mark.parametrize("case", CASES, ids=lambda c: f"{c[0]}{c[1]}-{c[2]}")
def test_reversal_negates_winding(case):
    seg = segment(case)
    assert winding(seg.reversed()) == pytest.approx(-winding(seg), abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(case=st.sampled_from(CASES), s=st.floats(0.02, 0.98))
def test_split_additivity(case, s):
    seg = segment(case)
    a, b = seg.split(s)
    assert winding(a) + winding(b) == pytest.approx(winding(seg), abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(case=st.sampled_from(CASES), seed=st.integers(0, 2**32 - 1), flip=st.booleans())
def test_frame_choice_independence(case, seed, flip):
    seg = segment(case)
    n = seg.patch.n
    _, q = seg.track(0.0)
    rot = special_ortho_group.rvs(n - 1, random_state=seed) if n > 2 else np.eye(1)
    if flip:
        rot[:, 0] *= -1
    basis = sphere_tangent_basis(q) @ rot
    assert phase_trace(seg, basis=basis).winding == pytest.approx(winding(seg), abs=1e-6)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_profile_perturbation_stability(n):
    base, other = indices_a(n), indices_a(n, psi_shape="quintic")
    for loop in base:
        assert base[loop].total_index == other[loop].total_index
    w0 = base["sigma1*gamma1"].winding("gamma1")
    w1 = other["sigma1*gamma1"].winding("gamma1")
    assert abs(w0 - w1) < 1e-3


def test_perturbed_profile_really_differs():
    assert profiles().psi(0.0) != profiles(psi_shape="quintic").psi(0.0)


@settings(max_examples=6, deadline=None)
@given(n=st.integers(2, 6), k=st.integers(-3, 3))
def test_integer_snapping(n, k):
    for rep in indices_a(n, gauge_k=k).values():
        assert rep.snap_error < 0.01 < SNAP_LIMIT


@pytest.mark.parametrize("n", [3, 4])
def test_epsilon_convergence(n):
    devs = [d for _, _, d in epsilon_sweep(n, [0.1, 0.05, 0.01, 0.005])]
    assert all(a > b for a, b in zip(devs, devs[1:]))
