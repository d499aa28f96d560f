"""End-to-end acceptance criteria 1-10, one printed PASS/FAIL line each.

Run directly (``python3 tests/test_acceptance.py``) or through pytest.
"""

import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import indices_a, indices_b, profiles, scenario_a, scenario_b  # noqa: E402
from handlemaslov.lagrangians import build_scenario_B  # noqa: E402
from handlemaslov.maslov import (  # noqa: E402
    closed_form_deviation,
    epsilon_sweep,
    gauge_sweep,
    phase_trace,
    winding,
)
from handlemaslov.smoothfn import default_profiles  # noqa: E402
from handlemaslov.spaces import sphere_tangent_basis  # noqa: E402
from handlemaslov.verify import (  # noqa: E402
    GEOMETRY_TOL,
    check_handle_structure,
    check_patch,
    check_ray_disjoint,
    search_mu,
)

A_DIMS = (3, 4, 5, 6)
B_DIMS = (3, 4, 5)


def criterion_1():
    worst = 0.0
    for n in A_DIMS:
        rep = indices_a(n)["sigma1*gamma1"]
        worst = max(worst, abs(rep.winding("gamma1") - (1 - n / 2)), abs(rep.winding("sigma1") - (n / 2 - 1)))
    return worst < 1e-3, f"max winding error {worst:.2e} (tol 1e-3)"


def criterion_2():
    ok, worst = True, 0.0
    for n in A_DIMS:
        rep = indices_a(n)
        ok &= rep["sigma1*gamma1"].total_index == 0 and rep["sigma2*gamma2"].total_index == n - 2
        worst = max(worst, *(r.snap_error for r in rep.values()))
    return ok and worst < 0.01, f"indices (0, n-2) for n in {A_DIMS}: {ok}, max snap {worst:.2e}"


def criterion_3():
    ok = True
    for n in A_DIMS:
        rows = gauge_sweep(scenario_a(n), range(-2, 3))
        ok &= all((r["index_sigma1_gamma1"], r["index_sigma2_gamma2"]) == (r["k"], n - 2 + r["k"])
                  and r["difference"] == n - 2 != 0 for r in rows)
    return ok, f"(k, n-2+k) for k in -2..2, n in {A_DIMS}: {ok}"


def criterion_4():
    ok, details = True, []
    for n in B_DIMS:
        rep = indices_b(n)
        w = dict(rep.per_segment)
        ok &= rep.total_index == 2 - n and rep.snap_error < 0.01
        ok &= abs(w["gamma1"] - 0.5) <= 1e-3 and abs(w["gamma4"] - 0.5) <= 1e-3
        ok &= abs(w["gamma2"]) <= 1e-6 and abs(w["gamma3"]) <= 1e-6
        dev5 = abs(w["gamma5"] - (1 - n))
        ok &= dev5 <= 0.05
        devs = [d for _, _, d in epsilon_sweep(n, [0.1, 0.05, 0.01])]
        ok &= all(a > b for a, b in zip(devs, devs[1:]))
        details.append(f"n={n}: {rep.total_index}, |g5-(1-n)|={dev5:.1e}")
    return ok, "; ".join(details)


def criterion_5():
    worst = 0.0
    for n in (3, 4):
        for sc in (scenario_a(n), scenario_b(n)):
            for patch in sc.patches.values():
                rep = check_patch(patch, n_t=200, n_q=40)
                for kind in ("lagrangian", "exact"):
                    worst = max(worst, rep[f"{kind} {patch.name}"].residual)
    return worst < GEOMETRY_TOL, f"max residual {worst:.2e} (tol {GEOMETRY_TOL:g}) on 200x40 grids, n=3,4"


def criterion_6():
    base = max(j.primitive_residual() for n in B_DIMS for j in scenario_b(n).junctions)
    eps = 0.05
    sc = build_scenario_B(3, default_profiles(epsilon=eps), theta_offset=0.1)
    shifted = max(j.primitive_residual() for j in sc.junctions)
    expect = 0.1 * (0.5 - eps)
    ok = base < 1e-10 and abs(shifted - expect) < 1e-6
    return ok, f"built {base:.1e} (tol 1e-10); offset 0.1 gives {shifted:.6f}, expected {expect:.6f}"


def criterion_7():
    worst = 0.0
    for n in A_DIMS:
        for name in ("gamma1", "sigma1", "gamma2", "sigma2"):
            worst = max(worst, closed_form_deviation(scenario_a(n, gauge_k=1).segment(name)))
    for n in B_DIMS:
        worst = max(worst, closed_form_deviation(scenario_b(n).segment("gamma5")))
    return worst < 1e-8, f"max |Omega^2 - integrand| {worst:.2e} (tol 1e-8)"


def criterion_8():
    ok, found = True, []
    for n in B_DIMS:
        p = profiles()
        mu = search_mu(p, n)
        rep = check_handle_structure(replace(p, mu=mu), n)
        ok &= rep.passed
        ok &= rep["D1 critical points"].note == "indices [1]"
        ok &= rep["sphere critical points"].note == f"indices [0, {n - 1}]"
        found.append(f"n={n}: mu*={mu:g}")
    return ok, ", ".join(found)


def criterion_9():
    p = profiles()
    margins = []
    ok = True
    for n in (2, 3, 4, 5, 6):
        rep = check_ray_disjoint(n, p)
        ok &= rep.passed
        margins.append(min(e.residual for e in rep.entries))
    on_cyl = np.concatenate([np.eye(3)[0], np.zeros(3)])
    bad = check_ray_disjoint(3, p, z0=on_cyl)
    ok &= not bad.passed and bad["ray vs L1"].residual < 1e-8
    return ok, f"min distance {min(margins):.4g} for n=2..6; on-cylinder ray distance {bad['ray vs L1'].residual:.1e}"


def criterion_10():
    rng = np.random.default_rng(2024)
    segs = [scenario_a(n).segment(s) for n in (3, 4) for s in ("gamma1", "sigma1", "gamma2", "sigma2")]
    segs += [scenario_b(n).segment(f"gamma{i}") for n in (3, 4) for i in range(1, 6)]
    rev = split = frame = 0.0
    for seg in segs:
        w = winding(seg)
        rev = max(rev, abs(winding(seg.reversed()) + w))
        a, b = seg.split(float(rng.uniform(0.05, 0.95)))
        split = max(split, abs(winding(a) + winding(b) - w))
        n = seg.patch.n
        rot, _ = np.linalg.qr(rng.normal(size=(n - 1, n - 1)))
        basis = sphere_tangent_basis(seg.track(0.0)[1]) @ rot
        frame = max(frame, abs(phase_trace(seg, basis=basis).winding - w))
    stable, drift = True, 0.0
    for n in (3, 4, 5):
        base, other = indices_a(n), indices_a(n, psi_shape="quintic")
        stable &= all(base[k].total_index == other[k].total_index for k in base)
        drift = max(drift, abs(base["sigma1*gamma1"].winding("gamma1") - other["sigma1*gamma1"].winding("gamma1")))
    snap = max(r.snap_error for n in A_DIMS for r in indices_a(n).values())
    snap = max(snap, *(indices_b(n).snap_error for n in B_DIMS))
    conv = True
    for n in (3, 4):
        devs = [d for _, _, d in epsilon_sweep(n, [0.1, 0.05, 0.01, 0.005])]
        conv &= all(a > b for a, b in zip(devs, devs[1:]))
    ok = rev < 1e-9 and split < 1e-9 and frame < 1e-6 and stable and drift < 1e-3 and snap < 0.01 and conv
    return ok, (f"reversal {rev:.1e}, split {split:.1e}, frame {frame:.1e}, perturbation drift {drift:.1e}, "
                f"snap {snap:.1e}, eps-monotone {conv}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


def _line(k, ok, detail):
    return f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.mark.parametrize("k", range(1, 11))
def test_criterion(k, capsys):
    ok, detail = CRITERIA[k - 1]()
    with capsys.disabled():
        print("\n" + _line(k, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = [fn() for fn in CRITERIA]
    for k, (ok, detail) in enumerate(results, start=1):
        print(_line(k, ok, detail))
    sys.exit(0 if all(ok for ok, _ in results) else 1)
