"""Structural checks: handle requirements, ray disjointness, patch geometry.

All sampling uses ``numpy.random.default_rng(seed)``; reports are
deterministic for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy import integrate, optimize

from handlemaslov.errors import SearchError
from handlemaslov.lagrangians import sphere_grid, unit
from handlemaslov.report import CheckReport
from handlemaslov.smoothfn import SmoothFn1D, validate_profiles
from handlemaslov.spaces import CylHandle, sphere_tangent_basis, sphere_tangent_vectors

GEOMETRY_TOL = 1e-8
JUNCTION_TOL = 1e-10
PULLBACK_TOL = 1e-10
CRIT_BALL = 0.05
# Smallest distance accepted as certified disjointness of the ray; see
# check_ray_disjoint for why this is far below the cylinders' 0.1 scale.
RAY_MARGIN = 1e-3


# ---------------------------------------------------------------------------
# handle structure

def _sample_handle(space, rng, m):
    """Points of the handle, a third of them on its critical set's neighbourhood."""
    prof = space.profiles
    n = space.n
    t = rng.uniform(-1, 1, m)
    y = prof.r(t) * rng.uniform(-1, 1, m)
    q = rng.normal(size=(m, n))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    p = rng.normal(size=(m, n))
    p -= np.sum(p * q, axis=1, keepdims=True) * q
    radius = prof.delta * rng.uniform(0, 1, m) ** (1.0 / max(n - 1, 1))
    p *= (radius / np.maximum(np.linalg.norm(p, axis=1), 1e-300))[:, None]
    near = m // 3
    t[:near] *= 0.2
    y[:near] *= 0.2
    p[:near] *= 0.1
    return np.concatenate([t[:, None], y[:, None], q, p], axis=1)


def _face_samples(space, rng, m, face):
    x = _sample_handle(space, rng, m)
    prof = space.profiles
    n = space.n
    if face == "t=+1":
        x[:, 0] = 1.0
        x[:, 1] = prof.r(1.0) * rng.uniform(-1, 1, m)
    elif face == "t=-1":
        x[:, 0] = -1.0
        x[:, 1] = prof.r(-1.0) * rng.uniform(-1, 1, m)
    elif face == "|y|=r":
        x[:, 1] = prof.r(x[:, 0]) * rng.choice([-1.0, 1.0], m)
    elif face == "|p|=delta":
        p = x[:, 2 + n:]
        norm = np.linalg.norm(p, axis=1)
        tiny = norm < 1e-9
        if np.any(tiny):
            q = x[tiny, 2: 2 + n]
            p[tiny] = sphere_tangent_basis(q)[..., 0]
            norm = np.linalg.norm(p, axis=1)
        x[:, 2 + n:] = p * (prof.delta / norm)[:, None]
    return x


def _chart(q_c, p_c=None):
    """Local coordinates (a, b) -> (q, p) near (q_c, p_c) on T*S^{n-1}."""
    e = sphere_tangent_basis(q_c)
    p_c = np.zeros_like(q_c) if p_c is None else p_c
    b0 = e.T @ p_c

    def to_point(z):
        k = e.shape[1]
        q = q_c + e @ z[:k]
        q = q / np.linalg.norm(q)
        p = e @ (b0 + z[k:])
        p = p - np.dot(p, q) * q
        return q, p

    return to_point


def _hessian(fun, z0, step=1e-4):
    d = len(z0)
    hess = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = step
            ej[j] = step
            val = (fun(z0 + ei + ej) - fun(z0 + ei - ej) - fun(z0 - ei + ej) + fun(z0 - ei - ej)) / (4 * step**2)
            hess[i, j] = hess[j, i] = val
    return hess


def _cluster(points, radius=1e-4):
    reps = []
    for pt in points:
        if all(np.linalg.norm(pt - r) > radius for r in reps):
            reps.append(pt)
    return reps


def sphere_critical_points(space, rng, n_samples=4000, n_starts=40):
    """Critical points of the sphere-factor Morse function with |p| <= delta.

    Returns a list of ``(q, p, index, min |eigenvalue|)``.
    """
    prof = space.profiles
    n = space.n
    x = _sample_handle(space, rng, n_samples)
    q_s, p_s = x[:, 2: 2 + n], x[:, 2 + n:]

    def sphere_grad(q, p):
        s = np.sum(p * p, axis=-1)
        dq = (prof.mu * np.asarray(prof.h(s)))[..., None] * unit(n, 0)
        dp = (2.0 + 2.0 * prof.mu * np.asarray(prof.h.d1(s)) * q[..., 0])[..., None] * p
        basis = sphere_tangent_vectors(q, p)
        amb = np.concatenate([dq, dp], axis=-1)
        return np.einsum("...k,...kj->...j", amb, basis)

    def f_sphere(q, p):
        s = float(np.dot(p, p))
        return s + prof.mu * float(prof.h(s)) * q[0]

    norms = np.linalg.norm(sphere_grad(q_s, p_s), axis=1)
    order = np.argsort(norms, kind="stable")[:n_starts]
    found = []
    for i in order:
        chart = _chart(q_s[i], p_s[i])
        z0 = np.zeros(2 * n - 2)

        def resid(z, chart=chart):
            q, p = chart(z)
            return sphere_grad(q, p)

        sol = optimize.least_squares(resid, z0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        q, p = chart(sol.x)
        if np.linalg.norm(resid(sol.x)) < 1e-9 and np.linalg.norm(p) <= prof.delta:
            found.append(np.concatenate([q, p]))
    crits = []
    for z in _cluster(found):
        q, p = z[:n], z[n:]
        chart = _chart(q, p)
        hess = _hessian(lambda w, chart=chart: f_sphere(*chart(w)), np.zeros(2 * n - 2))
        eig = np.linalg.eigvalsh(hess)
        crits.append((q, p, int(np.sum(eig < 0)), float(np.min(np.abs(eig)))))
    crits.sort(key=lambda c: (c[0][0], tuple(c[0])))
    return crits


def interval_critical_points(space, n_grid=101):
    """Critical points of y^2 - t^2 on the D^1-factor via least squares."""
    prof = space.profiles
    ts = np.linspace(-1, 1, n_grid)
    us = np.linspace(-1, 1, n_grid)
    tt, uu = np.meshgrid(ts, us, indexing="ij")
    yy = uu * prof.r(tt)
    norms = np.hypot(2 * tt, 2 * yy)
    starts = np.argsort(norms.ravel(), kind="stable")[:10]

    def grad(z):
        t, y = z
        return np.array([-2.0 * t, 2.0 * y])

    found = []
    for k in starts:
        sol = optimize.least_squares(grad, [tt.ravel()[k], yy.ravel()[k]], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        t, y = sol.x
        if np.linalg.norm(grad(sol.x)) < 1e-9 and abs(t) <= 1 and abs(y) <= prof.r(t):
            found.append(np.array(sol.x))
    crits = []
    for z in _cluster(found):
        hess = _hessian(lambda w: w[1] ** 2 - w[0] ** 2, z)
        eig = np.linalg.eigvalsh(hess)
        crits.append((z, int(np.sum(eig < 0)), float(np.min(np.abs(eig)))))
    return crits


def check_handle_structure(p, n, n_samples=10000, seed=0):
    """Boundary pointing, Morse data and gradient-likeness of the handle."""
    space = CylHandle(n, p)
    prof = p
    rng = np.random.default_rng(seed)
    rep = CheckReport()
    m_face = max(n_samples // 10, 100)

    # boundary pointing: negative pairing with outward conormal means inward
    for face, sign in (("t=+1", 1.0), ("t=-1", -1.0)):
        x = _face_samples(space, rng, m_face, face)
        z = space.liouville_field(x)
        rep.add_max(f"Z inward at {face}", sign * z[:, 0], 0.0, witnesses=x)
    x = _face_samples(space, rng, m_face, "|y|=r")
    z = space.liouville_field(x)
    t, y = x[:, 0], x[:, 1]
    pairing = np.sign(y) * z[:, 1] - prof.r.d1(t) * z[:, 0]
    rep.add_max("Z outward at |y|=r(t)", -pairing, 0.0, witnesses=x)
    x = _face_samples(space, rng, m_face, "|p|=delta")
    z = space.liouville_field(x)
    pairing = np.sum(x[:, 2 + n:] * z[:, 2 + n:], axis=1)
    rep.add_max("Z outward at |p|=delta", -pairing, 0.0, witnesses=x)

    # Morse data on each factor
    d1 = interval_critical_points(space)
    witness = [c[0].tolist() for c in d1]
    ok = len(d1) == 1 and d1[0][1] == 1 and d1[0][2] > 1e-6
    rep.add("D1 critical points", ok, float(len(d1)), 1.0, witness=witness,
            note=f"indices {[c[1] for c in d1]}")
    crit = sphere_critical_points(space, rng)
    indices = [c[2] for c in crit]
    expect_q = [-unit(n, 0), unit(n, 0)]
    located = len(crit) == 2 and all(
        np.linalg.norm(c[0] - e) < 1e-7 and np.linalg.norm(c[1]) < 1e-7 for c, e in zip(crit, expect_q))
    ok = located and indices == [0, n - 1] and min(c[3] for c in crit) > 1e-6
    rep.add("sphere critical points", ok, float(len(crit)), 2.0,
            witness=[np.concatenate([c[0], c[1]]).tolist() for c in crit],
            note=f"indices {indices}")

    # gradient-like: df(Z) > 0 away from the critical points
    x = _sample_handle(space, rng, n_samples)
    z = space.liouville_field(x)
    g1, g2 = space.morse_differential(x)
    dfz = np.sum((g1 + g2) * z, axis=1)
    centres = [np.concatenate([[0.0, 0.0], c[0], c[1]]) for c in crit] or [np.zeros(2 + 2 * n)]
    dist = np.min([np.linalg.norm(x - c, axis=1) for c in centres], axis=0)
    keep = dist > CRIT_BALL
    rep.add_max("gradient-like df(Z) > 0", -dfz[keep], 0.0, witnesses=x[keep])

    # rho bound on the middle of the handle
    t = np.linspace(-1, 1, 2001)
    mid = np.abs(t) <= 0.5
    bound = float(np.min(prof.r(t)) / np.max(np.abs(prof.r.d1(t))))
    rep.add_max("rho bound", np.abs(prof.rho(t[mid])) - bound, 0.0, witnesses=t[mid])
    return rep


def search_mu(p, n, mu_max=1.0, mu_min=1e-6, seed=0):
    """Largest mu on the grid mu_max / 2^k passing the handle checks."""
    mu = mu_max
    while mu >= mu_min:
        if check_handle_structure(replace(p, mu=mu), n, seed=seed).passed:
            return mu
        mu /= 2.0
    raise SearchError(f"no mu >= {mu_min} passes the handle checks")


def without_perturbation(p):
    """The same profiles with h == 0, which makes the sphere Morse function degenerate."""
    return replace(p, h=SmoothFn1D.constant(0.0, domain=p.h.domain, name="h0"))


# ---------------------------------------------------------------------------
# ray disjointness

def default_ray_direction(n):
    """z_0 with x = e_0 / sqrt 2 and y = e_{n-1} / sqrt 2."""
    return np.concatenate([unit(n, 0) / math.sqrt(2), unit(n, n - 1) / math.sqrt(2)])


def _ray_distance(points, z0):
    s = np.maximum(points @ z0 / np.dot(z0, z0), 0.0)
    return np.linalg.norm(points - s[..., None] * z0, axis=-1)


def extended_cylinder(psi, sign):
    """(t, q) -> (psi(t) q, sign psi(-t) q), with psi(t) = t continued for t >= epsilon."""

    def psi_ext(t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 1.0, t, psi(np.clip(t, -1.0, 1.0)))

    def point(t, q):
        a = psi_ext(t)[..., None]
        b = sign * psi_ext(-np.asarray(t, dtype=float))[..., None]
        return np.concatenate([a * q, b * q], axis=-1)

    return point


def check_ray_disjoint(n, p, z0=None, margin=RAY_MARGIN, t_max=3.0, seed=0):
    """Distance from the ray {s z_0, s >= 0} to the two extended surgery cylinders.

    Dense (t, q) sampling with the ray parameter projected exactly, then
    local descent from the best samples. Passes when the minimum exceeds
    ``margin``. The cylinders come within psi(0) of the origin, so no margin
    above psi(0) < epsilon can be certified for any admissible psi.
    """
    n = int(n)
    z0 = default_ray_direction(n) if z0 is None else np.asarray(z0, dtype=float)
    rep = CheckReport()
    ts = np.linspace(-t_max, t_max, 1201)
    if n == 1:
        qs = np.array([[1.0], [-1.0]])
    else:
        qs = sphere_grid(n, 400, seed)
        extra = z0[:n] + z0[n:]
        extra_norm = np.linalg.norm(extra)
        if extra_norm > 0:
            qs = np.vstack([qs, extra / extra_norm, -extra / extra_norm])
    for i, sign in ((1, 1.0), (2, -1.0)):
        cyl = extended_cylinder(p.psi, sign)
        pts = cyl(ts[:, None], qs[None, :, :])
        dist = _ray_distance(pts, z0)
        flat = np.argsort(dist.ravel(), kind="stable")[:8]
        best, witness = float(dist.ravel()[flat[0]]), None
        for k in flat:
            ti, qi = np.unravel_index(k, dist.shape)
            t_start, q_start = ts[ti], qs[qi]
            if n == 1:
                def obj(z, q=q_start):
                    return float(_ray_distance(cyl(np.array(z[0]), q), z0))
                res = optimize.minimize(obj, [t_start], method="Nelder-Mead",
                                        options={"xatol": 1e-12, "fatol": 1e-14})
                cand = (res.fun, [float(res.x[0]), *q_start])
            else:
                e = sphere_tangent_basis(q_start)

                def obj(z, q_c=q_start, e=e):
                    q = q_c + e @ z[1:]
                    q = q / np.linalg.norm(q)
                    return float(_ray_distance(cyl(np.array(z[0]), q), z0))
                res = optimize.minimize(obj, np.concatenate([[t_start], np.zeros(n - 1)]), method="Nelder-Mead",
                                        options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
                q = q_start + e @ res.x[1:]
                cand = (res.fun, [float(res.x[0]), *(q / np.linalg.norm(q))])
            if cand[0] <= best:
                best, witness = float(cand[0]), cand[1]
        if witness is None:
            ti, qi = np.unravel_index(flat[0], dist.shape)
            witness = [float(ts[ti]), *qs[qi]]
        rep.add(f"ray vs L{i}", best > margin, best, margin, witness=witness,
                note="minimum distance (t, q) witness")
    return rep


# ---------------------------------------------------------------------------
# patch geometry and the scenario-wide report

def patch_grid(patch, n_t=200, n_q=40, seed=0):
    ts = np.linspace(*patch.t_range, n_t)
    qs = sphere_grid(patch.n, n_q, seed)
    t = np.broadcast_to(ts[:, None], (n_t, n_q))
    q = np.broadcast_to(qs[None, :, :], (n_t, n_q, patch.n))
    return t, q


def check_patch(patch, n_t=200, n_q=40, seed=0):
    """Lagrangian and exactness residuals on a (t, q) grid."""
    rep = CheckReport()
    t, q = patch_grid(patch, n_t, n_q, seed)
    x = patch.position(t, q)
    frame = patch.partials(t, q)
    space = patch.space
    n = patch.n
    worst = np.zeros(t.shape)
    for i in range(n):
        for j in range(i + 1, n):
            worst = np.maximum(worst, np.abs(space.symplectic_form(x, frame[..., :, i], frame[..., :, j])))
    wit = np.concatenate([t[..., None], q], axis=-1).reshape(-1, n + 1)
    rep.add_max(f"lagrangian {patch.name}", worst.ravel(), GEOMETRY_TOL, witnesses=wit)
    ex_t = np.abs(patch.pullback_dt(t, q) - patch.primitive_dt(t))
    ex_q = np.max(np.abs(patch.pullback_dq(t, q)), axis=-1)
    rep.add_max(f"exact {patch.name}", np.maximum(ex_t, ex_q).ravel(), GEOMETRY_TOL, witnesses=wit)

    # primitive values against independent integration of the pullback
    q0 = unit(n, 0)
    t0, t1 = patch.t_range
    knots = [b for b in patch.breakpoints if t0 < b < t1]
    marks = np.linspace(t0, t1, 9)
    base = float(patch.primitive(t0))
    errs = []
    for tm in marks[1:]:
        pts = [b for b in knots if t0 < b < tm]
        val, _ = integrate.quad(lambda s: float(patch.pullback_dt(s, q0)), t0, tm, points=pts or None,
                                epsabs=1e-13, epsrel=1e-13, limit=200)
        errs.append(abs(float(patch.primitive(tm)) - base - val))
    rep.add_max(f"primitive values {patch.name}", errs, JUNCTION_TOL, witnesses=marks[1:])
    return rep


def check_surgery_pullback(scenario, n_t=200):
    """Closed-form (F_i^* lambda)(d/dt) = ((-1)^i/2)(psi psi'(-t) + psi(-t) psi') on L_1, L_2."""
    rep = CheckReport()
    psi = scenario.profiles.psi
    ts = np.linspace(-1, 1, n_t)
    qs = sphere_grid(scenario.n, 40)
    for i in (1, 2):
        patch = scenario.patches[f"L{i}"]
        closed = 0.5 * (-1) ** i * (psi(ts) * psi.d1(-ts) + psi(-ts) * psi.d1(ts))
        res = np.abs(patch.pullback_dt(ts[:, None], qs[None]) - closed[:, None])
        rep.add_max(f"pullback identity L{i}", np.max(res, axis=1), PULLBACK_TOL, witnesses=ts)
    return rep


def run_all(scenario, seed=0, handle=True, ray=True, handle_samples=10000, ray_margin=RAY_MARGIN):
    """Every structural check for a built scenario, in one report."""
    rep = CheckReport()
    rep.extend(validate_profiles(scenario.profiles, seed=seed), prefix="profiles: ")
    for patch in scenario.patches.values():
        rep.extend(check_patch(patch, seed=seed), prefix="patch: ")
    qs = sphere_grid(scenario.n, 40, seed)
    for junc in scenario.junctions:
        rep.add(f"junction {junc.name} locus", junc.locus_residual(qs) < JUNCTION_TOL,
                junc.locus_residual(qs), JUNCTION_TOL)
        rep.add(f"junction {junc.name} primitive", junc.primitive_residual() < JUNCTION_TOL,
                junc.primitive_residual(), JUNCTION_TOL)
    for loop in scenario.loops.values():
        res = loop.closure_residual()
        rep.add(f"loop {loop.name} closed", res < JUNCTION_TOL, res, JUNCTION_TOL)
    p = scenario.profiles
    t = np.linspace(-1, 1, 4001)
    if scenario.name == "A":
        rep.extend(check_surgery_pullback(scenario), prefix="patch: ")
        for i, g in enumerate(p.g_handle, start=1):
            rep.add_max(f"K{i} inside handle", np.abs(g.d1(t)) - p.r(t), 0.0, witnesses=t)
        if handle:
            rep.extend(check_handle_structure(p, scenario.n, n_samples=handle_samples, seed=seed),
                       prefix="handle: ")
        if ray:
            rep.extend(check_ray_disjoint(scenario.n, p, margin=ray_margin, seed=seed), prefix="ray: ")
    else:
        eps = p.epsilon
        y_max = float(np.max(eps * p.phi(t)))
        rep.add("F5 inside critical handle", y_max < 0.5, y_max, 0.5, note="max |y| on K")
        rep.add("theta range", float(np.max(np.abs(p.theta(t)))) <= 1.0,
                float(np.max(np.abs(p.theta(t)))), 1.0)
    rep.warnings.extend(scenario.warnings)
    return rep
