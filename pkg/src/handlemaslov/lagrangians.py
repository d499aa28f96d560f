"""Parametrized Lagrangian patches, gluing identifications and framed paths.

Every patch is a map F: [t_0, t_1] x S^{n-1} -> chart of one of two shapes:

``radial``   F(t, q) = (a(t) q, b(t) q)        in a flat (x, y) chart
``product``  F(t, q) = (a(t), b(t), q, 0)      in a (t, y, q, p) chart

so the t-partial and the sphere partials dF[(0, v)] are available in closed
form. Each patch also carries a primitive depending on t only, with its
analytic derivative, so exactness can be checked against the pulled-back
Liouville form.

Two scenarios are assembled here:

* ``A``: two surgeries L_1, L_2 of the union of the x- and y-planes in the
  disc, capped by the graphs K_1, K_2 of dg_i in a cylindrical handle.
* ``B``: a Lagrangian in T*(S^1 x S^{n-1}) following the Liouville flow into
  a critical handle, closed up by a disc K in that handle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from handlemaslov.errors import ConstructionError, NonConvergenceError, ParameterError, RefinementNeeded
from handlemaslov.smoothfn import (
    ProfileSet,
    make_phi,
    make_theta,
    psi_overlap_integral,
    quadrature,
    theta_target,
    validate_profiles,
)
from handlemaslov.spaces import (
    CotProduct,
    CritHandle,
    CylHandle,
    Disc2n,
    sphere_tangent_basis,
)

CIRCUMFERENCE = 4.0
TRANSPORT_MIN_SV = 0.5
TRANSPORT_MAX_DEPTH = 24


def unit(n, index=0, sign=1.0):
    e = np.zeros(n)
    e[index] = sign
    return e


def sphere_grid(n, m=40, seed=0):
    """``m`` deterministic sphere points, starting with +-e_0 and +-e_1."""
    rng = np.random.default_rng(seed)
    fixed = [unit(n, 0), unit(n, 0, -1.0), unit(n, 1), unit(n, 1, -1.0)]
    rest = rng.normal(size=(max(m - len(fixed), 0), n))
    rest /= np.linalg.norm(rest, axis=1, keepdims=True)
    return np.vstack(fixed + [rest])[:m]


class Antiderivative:
    """t -> int_a^t f, by adaptive quadrature from the nearest knot below t."""

    def __init__(self, integrand, a, b, knots=(), tol=1e-13):
        self.integrand = integrand
        self.a = float(a)
        self.b = float(b)
        self.tol = tol
        self.knots = np.array(sorted({self.a, self.b, *(k for k in knots if self.a < k < self.b)}))
        cum = [0.0]
        for lo, hi in zip(self.knots[:-1], self.knots[1:]):
            cum.append(cum[-1] + quadrature(integrand, lo, hi, tol=tol)[0])
        self.cumulative = np.array(cum)

    @property
    def total(self):
        return float(self.cumulative[-1])

    def _one(self, t):
        i = int(np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, len(self.knots) - 1))
        return self.cumulative[i] + quadrature(self.integrand, self.knots[i], t, tol=self.tol)[0]

    def __call__(self, t):
        arr = np.asarray(t, dtype=float)
        out = np.array([self._one(v) for v in arr.ravel()]).reshape(arr.shape)
        return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# patches

@dataclass
class LagrangianPatch:
    """F: [t_0, t_1] x S^{n-1} -> space, see the module docstring for shapes.

    ``a``, ``b`` and their derivatives ``da``, ``db`` define the map;
    ``primitive`` and ``primitive_dt`` are functions of t alone.
    """

    name: str
    space: object
    shape: str
    a: callable
    b: callable
    da: callable
    db: callable
    primitive: callable
    primitive_dt: callable
    t_range: tuple = (-1.0, 1.0)
    breakpoints: tuple = ()
    description: str = ""

    @property
    def n(self):
        return self.space.n

    def position(self, t, q):
        t = np.asarray(t, dtype=float)
        q = np.asarray(q, dtype=float)
        t, q = np.broadcast_arrays(t[..., None], q)
        t = t[..., 0]
        a = np.asarray(self.a(t))
        b = np.asarray(self.b(t))
        if self.shape == "radial":
            return np.concatenate([a[..., None] * q, b[..., None] * q], axis=-1)
        zeros = np.zeros_like(q)
        return np.concatenate([a[..., None], b[..., None], q, zeros], axis=-1)

    def d_t(self, t, q):
        t = np.asarray(t, dtype=float)
        q = np.asarray(q, dtype=float)
        t, q = np.broadcast_arrays(t[..., None], q)
        t = t[..., 0]
        da = np.asarray(self.da(t))
        db = np.asarray(self.db(t))
        if self.shape == "radial":
            return np.concatenate([da[..., None] * q, db[..., None] * q], axis=-1)
        zeros = np.zeros_like(q)
        return np.concatenate([da[..., None], db[..., None], zeros, zeros], axis=-1)

    def d_q(self, t, vecs):
        """dF[(0, v)] for sphere tangent vectors stored as columns ``(..., n, k)``."""
        t = np.asarray(t, dtype=float)
        vecs = np.asarray(vecs, dtype=float)
        if self.shape == "radial":
            a = np.asarray(self.a(t))[..., None, None]
            b = np.asarray(self.b(t))[..., None, None]
            return np.concatenate([a * vecs, b * vecs], axis=-2)
        lead = vecs.shape[:-2]
        k = vecs.shape[-1]
        zero2 = np.zeros(lead + (2, k))
        return np.concatenate([zero2, vecs, np.zeros_like(vecs)], axis=-2)

    def partials(self, t, q, basis=None):
        """Frame [dF/dt, dF[e_1], ..., dF[e_{n-1}]] as ``(..., dim, n)``."""
        q = np.asarray(q, dtype=float)
        if basis is None:
            basis = sphere_tangent_basis(q)
        t_b = np.broadcast_to(np.asarray(t, dtype=float), q.shape[:-1])
        col0 = self.d_t(t_b, q)[..., :, None]
        return np.concatenate([col0, self.d_q(t_b, basis)], axis=-1)

    def pullback_dt(self, t, q):
        """(F^* lambda)(d/dt)."""
        return self.space.liouville_form(self.position(t, q), self.d_t(t, q))

    def pullback_dq(self, t, q, basis=None):
        """(F^* lambda)(d/dq_a) for the sphere basis, shape ``(..., n-1)``."""
        q = np.asarray(q, dtype=float)
        if basis is None:
            basis = sphere_tangent_basis(q)
        t_b = np.broadcast_to(np.asarray(t, dtype=float), q.shape[:-1])
        x = self.position(t_b, q)
        cols = self.d_q(t_b, basis)
        return self.space.liouville_form(x[..., None, :], np.swapaxes(cols, -1, -2))

    def describe(self):
        return {"name": self.name, "space": self.space.kind, "t_range": list(self.t_range),
                "map": self.description}


def _radial(name, space, a, b, primitive, primitive_dt, breakpoints, description):
    return LagrangianPatch(name, space, "radial", a, b, a.d1, b.d1, primitive, primitive_dt,
                           breakpoints=tuple(breakpoints), description=description)


class _Fn:
    """Composable t-function with first and second derivative."""

    def __init__(self, f, d1, d2=None):
        self.f = f
        self.d1 = d1
        self.d2 = d2

    def __call__(self, t):
        return self.f(t)


def _reflected(fn, sign=1.0):
    """t -> sign * fn(-t)."""
    return _Fn(lambda t: sign * fn(-np.asarray(t)), lambda t: -sign * fn.d1(-np.asarray(t)),
               lambda t: sign * fn.d2(-np.asarray(t)))


def _affine(c0, c1):
    return _Fn(lambda t: c0 + c1 * np.asarray(t, dtype=float),
               lambda t: c1 + 0.0 * np.asarray(t, dtype=float),
               lambda t: 0.0 * np.asarray(t, dtype=float))


def _scaled(fn, c, shift=0.0):
    return _Fn(lambda t: c * fn(t) + shift, lambda t: c * fn.d1(t), lambda t: c * fn.d2(t))


# ---------------------------------------------------------------------------
# identifications between charts

class Identification:
    """A chart map near a gluing locus together with its differential."""

    name = "identity"

    def __init__(self, source, target):
        self.source = source
        self.target = target

    def point(self, x):
        return np.asarray(x, dtype=float)

    def push(self, x, vecs):
        return np.asarray(vecs, dtype=float)

    def inverse_point(self, y):
        return np.asarray(y, dtype=float)

    def inverse(self):
        return _Inverse(self)

    def describe(self):
        return {"name": self.name, "from": self.source.kind, "to": self.target.kind}


class _Inverse(Identification):
    def __init__(self, forward):
        super().__init__(forward.target, forward.source)
        self.forward = forward
        self.name = forward.name + "^-1"

    def point(self, x):
        return self.forward.inverse_point(x)

    def inverse_point(self, y):
        return self.forward.point(y)

    def push(self, x, vecs):
        x_src = self.forward.inverse_point(x)
        basis = self.forward.source.tangent_basis(x_src)
        image = self.forward.push(x_src, basis)
        coeff, *_ = np.linalg.lstsq(image, np.asarray(vecs, dtype=float), rcond=None)
        return basis @ coeff

    def inverse(self):
        return self.forward


class HandleLowerEnd(Identification):
    """Collar of the t = -1 face of a cylindrical handle into the disc.

    (t, y, q, p) -> ((t + 2) q, y q + p): the face lands on the unit sphere
    of the x-plane, d/dt goes to the radial x-direction and d/dy to the
    radial y-direction.
    """

    name = "handle(t=-1)->disc"

    def point(self, x):
        t, y, q, p = self.source.split(x)
        return np.concatenate([(t + 2.0)[..., None] * q, y[..., None] * q + p], axis=-1)

    def push(self, x, vecs):
        t, y, q, p = self.source.split(x)
        vt, vy, vq, vp = self.source.split(np.swapaxes(vecs, -1, -2))
        dx = vt[:, None] * q + (t + 2.0) * vq
        dy = vy[:, None] * q + y * vq + vp
        return np.concatenate([dx, dy], axis=-1).T

    def inverse_point(self, z):
        n = self.source.n
        xx, yy = z[:n], z[n:]
        r = np.linalg.norm(xx)
        q = xx / r
        y = float(np.dot(yy, q))
        return np.concatenate([[r - 2.0, y], q, yy - y * q])


class HandleUpperEnd(Identification):
    """Collar of the t = +1 face of a cylindrical handle into the disc.

    (t, y, q, p) -> (y q - p, (2 - t) q): the face lands on the unit sphere
    of the y-plane.
    """

    name = "handle(t=+1)->disc"

    def point(self, x):
        t, y, q, p = self.source.split(x)
        return np.concatenate([y[..., None] * q - p, (2.0 - t)[..., None] * q], axis=-1)

    def push(self, x, vecs):
        t, y, q, p = self.source.split(x)
        vt, vy, vq, vp = self.source.split(np.swapaxes(vecs, -1, -2))
        dx = vy[:, None] * q + y * vq - vp
        dy = -vt[:, None] * q + (2.0 - t) * vq
        return np.concatenate([dx, dy], axis=-1).T

    def inverse_point(self, z):
        n = self.source.n
        xx, yy = z[:n], z[n:]
        r = np.linalg.norm(yy)
        q = yy / r
        y = float(np.dot(xx, q))
        return np.concatenate([[2.0 - r, y], q, y * q - xx])


class ConormalToCritical(Identification):
    """Neighbourhood of the unit conormal {y = 1} into the critical handle.

    (t, y, q, p) -> (q / y, y^2 t q + p). It sends (0, 1, q, 0) to (q, 0)
    and pulls the handle's Liouville form back to -y dt - p dq along the
    zero-fibre locus, so primitives can be compared directly.
    """

    name = "conormal->critical handle"

    def point(self, x):
        t, y, q, p = self.source.split(x)
        return np.concatenate([q / y[..., None], (y**2 * t)[..., None] * q + p], axis=-1)

    def push(self, x, vecs):
        t, y, q, p = self.source.split(x)
        vt, vy, vq, vp = self.source.split(np.swapaxes(vecs, -1, -2))
        dx = vq / y - (vy[:, None] * q) / y**2
        dy = ((2 * y * t * vy + y**2 * vt)[:, None] * q + y**2 * t * vq + vp)
        return np.concatenate([dx, dy], axis=-1).T

    def inverse_point(self, z):
        n = self.target.n
        xx, yy = z[:n], z[n:]
        r = np.linalg.norm(xx)
        q = xx / r
        y = 1.0 / r
        along = float(np.dot(yy, q))
        t = along / y**2
        return np.concatenate([[t, y], q, yy - along * q])


# ---------------------------------------------------------------------------
# junctions, segments, loops

@dataclass
class Junction:
    """from_patch(t_from, q) is identified with to_patch(t_to, q_sign * q)."""

    name: str
    from_patch: LagrangianPatch
    to_patch: LagrangianPatch
    t_from: float
    t_to: float
    q_sign: float
    ident: Identification

    def locus_residual(self, qs):
        """Max point mismatch of the identification over sphere points ``qs``."""
        worst = 0.0
        for q in qs:
            src = self.from_patch.position(self.t_from, q)
            dst = self.to_patch.position(self.t_to, self.q_sign * q)
            worst = max(worst, self.to_patch.space.distance(self.ident.point(src), dst))
        return worst

    def primitive_residual(self):
        return abs(float(self.from_patch.primitive(self.t_from)) - float(self.to_patch.primitive(self.t_to)))

    def describe(self):
        return {"name": self.name, "from": [self.from_patch.name, self.t_from],
                "to": [self.to_patch.name, self.t_to], "q_sign": self.q_sign,
                "identification": self.ident.name}


@dataclass
class SphereTrack:
    """u -> cos(angle u) q_a + sin(angle u) w; angle 0 keeps q fixed at q_a."""

    q_a: np.ndarray
    w: np.ndarray
    angle: float = 0.0

    def __call__(self, u):
        c, s = math.cos(self.angle * u), math.sin(self.angle * u)
        return c * self.q_a + s * self.w


@dataclass
class PathSegment:
    """s in [0, 1] -> (t, q) in a patch, with t and u affine in s."""

    name: str
    patch: LagrangianPatch
    t0: float
    t1: float
    sphere: SphereTrack
    u0: float = 0.0
    u1: float = 1.0
    formula: str | None = None
    context: dict = field(default_factory=dict)

    def track(self, s):
        t = self.t0 + (self.t1 - self.t0) * s
        u = self.u0 + (self.u1 - self.u0) * s
        return t, self.sphere(u)

    def point(self, s):
        t, q = self.track(s)
        return self.patch.position(t, q)

    @property
    def breakpoints(self):
        if self.t1 == self.t0:
            return ()
        out = []
        for b in self.patch.breakpoints:
            s = (b - self.t0) / (self.t1 - self.t0)
            if 0.0 < s < 1.0:
                out.append(float(s))
        return tuple(sorted(out))

    def reversed(self):
        return replace(self, name=self.name + "^-1", t0=self.t1, t1=self.t0, u0=self.u1, u1=self.u0)

    def split(self, s):
        if not 0.0 < s < 1.0:
            raise ParameterError("split parameter must lie in (0, 1)")
        tm = self.t0 + (self.t1 - self.t0) * s
        um = self.u0 + (self.u1 - self.u0) * s
        return (replace(self, name=self.name + "[a]", t1=tm, u1=um),
                replace(self, name=self.name + "[b]", t0=tm, u0=um))

    def describe(self):
        return {"name": self.name, "patch": self.patch.name, "t": [self.t0, self.t1],
                "sphere_angle": self.sphere.angle * (self.u1 - self.u0), "formula": self.formula}


@dataclass
class Loop:
    name: str
    segments: list
    junctions: list

    def closure_residual(self):
        """Max mismatch between a segment's end, identified forward, and the next start."""
        worst = 0.0
        for seg, nxt, junc in zip(self.segments, self.segments[1:] + self.segments[:1], self.junctions):
            end = junc.ident.point(seg.point(1.0))
            worst = max(worst, nxt.patch.space.distance(end, nxt.point(0.0)))
        return worst


@dataclass
class Scenario:
    name: str
    n: int
    profiles: ProfileSet
    spaces: dict
    patches: dict
    junctions: list
    loops: dict
    expected: dict
    gauge_k: int = 0
    warnings: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def segment(self, name):
        for loop in self.loops.values():
            for seg in loop.segments:
                if seg.name == name:
                    return seg
        raise KeyError(name)

    def segments(self):
        return [seg for loop in self.loops.values() for seg in loop.segments]

    def to_summary(self):
        p = self.profiles
        return {
            "scenario": self.name,
            "n": self.n,
            "gauge_k": self.gauge_k,
            "parameters": {"epsilon": p.epsilon, "mu": p.mu, "delta": p.delta, **self.params},
            "spaces": {k: v.describe() for k, v in self.spaces.items()},
            "patches": [patch.describe() for patch in self.patches.values()],
            "junctions": [j.describe() for j in self.junctions],
            "loops": {name: [s.describe() for s in loop.segments] for name, loop in self.loops.items()},
            "expected": self.expected,
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------------------
# frames

def _orthonormalize(v):
    qm, r = np.linalg.qr(v)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return qm * signs


def initial_frame(seg: PathSegment, s: float, basis=None):
    """Orthonormalized patch partials at s; ``basis`` overrides the sphere frame."""
    t, q = seg.track(s)
    return _orthonormalize(seg.patch.partials(t, q, basis))


def transport_step(seg: PathSegment, frame, s_new):
    """Project ``frame`` onto the tangent space at s_new and re-orthonormalize."""
    t, q = seg.track(s_new)
    partials = seg.patch.partials(t, q)
    coeff, *_ = np.linalg.lstsq(partials, frame, rcond=None)
    projected = partials @ coeff
    smallest = np.linalg.svd(projected, compute_uv=False)[-1]
    if smallest < TRANSPORT_MIN_SV:
        raise RefinementNeeded(f"tangent space turned too fast near s = {s_new:.6g} (sv {smallest:.3f})")
    return _orthonormalize(projected)


def frame_along(seg: PathSegment, s_values, basis=None):
    """Transported frames at increasing (or decreasing) ``s_values``.

    Steps that lose rank are bisected; more than 24 halvings raise
    :class:`NonConvergenceError`.
    """
    s_values = [float(s) for s in s_values]
    frame = initial_frame(seg, s_values[0], basis)
    frames = [frame]
    s_cur = s_values[0]
    for target in s_values[1:]:
        depth = 0
        while s_cur != target:
            step = target if depth == 0 else s_cur + (target - s_cur) / 2.0**depth
            try:
                frame = transport_step(seg, frame, step)
            except RefinementNeeded:
                depth += 1
                if depth > TRANSPORT_MAX_DEPTH:
                    raise NonConvergenceError(f"frame transport stalled at s = {s_cur}", worst=s_cur)
                continue
            s_cur = step
            depth = max(depth - 1, 0)
        frames.append(frame)
    return frames


# ---------------------------------------------------------------------------
# scenario A

def _surgery_integrand(psi):
    return lambda s: psi(s) * psi.d1(-s) + psi(-s) * psi.d1(s)


def build_scenario_A(n, p: ProfileSet, gauge_k=0, validate=True):
    """Disc with the two surgeries of {y = 0} u {x = 0}, plus a cylindrical handle."""
    n = int(n)
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    if validate:
        rep = validate_profiles(p)
        if not rep.passed:
            raise ConstructionError(f"profiles invalid: {[e.name for e in rep.failures()]}")
    psi, rho, eps = p.psi, p.rho, p.epsilon
    disc = Disc2n(n)
    handle = CylHandle(n, p, gauge_k)

    integrand = _surgery_integrand(psi)
    cum = Antiderivative(integrand, -1.0, 1.0, knots=psi.knots)
    patches = {}
    for i, sign in ((1, 1.0), (2, -1.0)):
        c = 0.5 * (-1.0) ** i
        patches[f"L{i}"] = _radial(
            f"L{i}", disc, psi, _reflected(psi, sign),
            primitive=(lambda t, c=c: c * cum(t)),
            primitive_dt=(lambda t, c=c: c * integrand(np.asarray(t, dtype=float))),
            breakpoints=(-eps, 0.0, eps),
            description=f"(psi(t) q, {'+' if sign > 0 else '-'}psi(-t) q)",
        )
    for i, g in ((1, p.g_handle[0]), (2, p.g_handle[1])):
        patches[f"K{i}"] = LagrangianPatch(
            f"K{i}", handle, "product",
            a=_affine(0.0, 1.0), b=g.d1, da=_affine(1.0, 0.0), db=g.d2,
            primitive=(lambda t, g=g: -g(t) + rho(t) * g.d1(t)),
            primitive_dt=(lambda t, g=g: -g.d1(t) + rho.d1(t) * g.d1(t) + rho(t) * g.d2(t)),
            breakpoints=tuple(g.knots),
            description=f"(t, g{i}'(t), q, 0)",
        )

    lower = HandleLowerEnd(handle, disc)
    upper = HandleUpperEnd(handle, disc)
    L1, L2, K1, K2 = (patches[k] for k in ("L1", "L2", "K1", "K2"))
    junctions = [
        Junction("L1->K1", L1, K1, 1.0, -1.0, 1.0, lower.inverse()),
        Junction("K1->L1", K1, L1, 1.0, -1.0, 1.0, upper),
        Junction("L2->K2", L2, K2, 1.0, -1.0, 1.0, lower.inverse()),
        Junction("K2->L2", K2, L2, 1.0, -1.0, -1.0, upper),
    ]
    q0 = unit(n, 0)
    fixed = SphereTrack(q0, unit(n, 1), 0.0)
    beta = SphereTrack(q0, unit(n, 1), math.pi)
    ctx = {"n": n, "profiles": p, "gauge_k": int(gauge_k)}
    g1 = PathSegment("gamma1", L1, -1.0, 1.0, fixed, formula="surgery_L1", context=ctx)
    s1 = PathSegment("sigma1", K1, -1.0, 1.0, fixed, formula="handle_core",
                     context={**ctx, "handle_index": 0})
    g2 = PathSegment("gamma2", L2, -1.0, 1.0, fixed, formula="surgery_L2", context=ctx)
    s2 = PathSegment("sigma2", K2, -1.0, 1.0, beta, formula="handle_core",
                     context={**ctx, "handle_index": 1})
    loops = {
        "sigma1*gamma1": Loop("sigma1*gamma1", [g1, s1], [junctions[0], junctions[1]]),
        "sigma2*gamma2": Loop("sigma2*gamma2", [g2, s2], [junctions[2], junctions[3]]),
    }
    k = int(gauge_k)
    expected = {
        "loops": {"sigma1*gamma1": 0 + k, "sigma2*gamma2": n - 2 + k},
        "segments": {
            "gamma1": [1 - n / 2, 1e-3],
            "sigma1": [n / 2 - 1 + k, 1e-3],
            "gamma2": [n / 2 - 1, 1e-3],
            "sigma2": [n / 2 - 1 + k, 1e-3],
        },
    }
    warnings = []
    if n == 2:
        warnings.append("n = 2: both loop indices vanish, so index-based non-vanishing conclusions are void")
    return Scenario("A", n, p, {"disc": disc, "handle": handle}, patches, junctions, loops,
                    expected, gauge_k=k, warnings=warnings,
                    params={"surgery_end_value": cum.total})


# ---------------------------------------------------------------------------
# scenario B

def crit_core_patch(n, epsilon, phi=None, space=None, psi_overlap=0.0):
    """The disc K: (t q, epsilon phi(t) q) in the critical handle."""
    phi = make_phi() if phi is None else phi
    space = CritHandle(n) if space is None else space
    eps = float(epsilon)
    integrand = (lambda s: 2.0 * phi(s) + s * phi.d1(s))
    cum = Antiderivative(integrand, -1.0, 1.0, knots=phi.knots)
    return _radial(
        "F5", space, _affine(0.0, 1.0), _scaled(phi, eps),
        primitive=(lambda t: -eps * cum(t) - eps * psi_overlap),
        primitive_dt=(lambda t: -eps * integrand(np.asarray(t, dtype=float))),
        breakpoints=tuple(phi.knots),
        description="(t q, epsilon phi(t) q)",
    )


def gamma5_segment(n, epsilon, phi=None):
    """Just the handle path of scenario B, for epsilon sweeps."""
    phi = make_phi() if phi is None else phi
    patch = crit_core_patch(n, epsilon, phi)
    ctx = {"n": int(n), "epsilon": float(epsilon), "phi": phi}
    return PathSegment("gamma5", patch, -1.0, 1.0, SphereTrack(unit(n, 0), unit(n, 1)),
                       formula="crit_core", context=ctx)


def build_scenario_B(n, p: ProfileSet, theta_offset=0.0, circumference=CIRCUMFERENCE, validate=True):
    """T*(S^1 x S^{n-1}) with a critical handle on the conormal of the sphere.

    theta is rebuilt so that its integral solves the gluing constraint of the
    primitives; ``theta_offset`` shifts that target to exercise the check.
    """
    n = int(n)
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    eps = p.epsilon
    target = theta_target(p.psi, p.phi, eps)
    p = replace(p, theta=make_theta(target + theta_offset))
    if validate:
        rep = validate_profiles(p)
        if not rep.passed:
            raise ConstructionError(f"profiles invalid: {[e.name for e in rep.failures()]}")
    psi, theta, phi = p.psi, p.theta, p.phi
    cot = CotProduct(n, circumference)
    crit = CritHandle(n)

    overlap = psi_overlap_integral(psi, eps)
    theta_int = Antiderivative(theta, -1.0, 1.0, knots=theta.knots)
    f1_int = Antiderivative(lambda s: psi(-s) * psi.d1(s), -1.0, 1.0, knots=psi.knots)
    f4_int = Antiderivative(lambda s: psi(s) * psi.d1(-s), -1.0, 1.0, knots=psi.knots)
    half = 0.5 - eps
    T = theta_int.total

    patches = {
        "F1": LagrangianPatch(
            "F1", cot, "product",
            a=_scaled(psi, eps, eps), b=_reflected(psi), da=_Fn(lambda t: eps * psi.d1(t), None),
            db=_Fn(lambda t: -psi.d1(-np.asarray(t)), None),
            primitive=lambda t: eps * (f1_int.total - f1_int(t)) + half * T,
            primitive_dt=lambda t: -eps * psi(-np.asarray(t)) * psi.d1(t),
            breakpoints=tuple(psi.knots), description="(eps psi(t) + eps, psi(-t), q, 0)"),
        "F2": LagrangianPatch(
            "F2", cot, "product",
            a=_affine(0.5 + eps, half), b=theta, da=_affine(half, 0.0), db=theta.d1,
            primitive=lambda t: half * (T - theta_int(t)),
            primitive_dt=lambda t: -half * theta(t),
            breakpoints=tuple(theta.knots), description="((1/2 - eps) t + 1/2 + eps, theta(t), q, 0)"),
        "Z0": LagrangianPatch(
            "Z0", cot, "product",
            a=_affine(0.0, 1.0), b=_affine(0.0, 0.0), da=_affine(1.0, 0.0), db=_affine(0.0, 0.0),
            primitive=lambda t: 0.0 * np.asarray(t, dtype=float),
            primitive_dt=lambda t: 0.0 * np.asarray(t, dtype=float),
            t_range=(1.0, circumference - 2 * eps), description="(t, 0, q, 0)"),
        "F4": LagrangianPatch(
            "F4", cot, "product",
            a=_scaled(_reflected(psi), -eps, -eps), b=psi,
            da=_Fn(lambda t: eps * psi.d1(-np.asarray(t)), None), db=psi.d1,
            primitive=lambda t: -eps * f4_int(t),
            primitive_dt=lambda t: -eps * psi(t) * psi.d1(-np.asarray(t)),
            breakpoints=tuple(psi.knots), description="(-eps psi(-t) - eps, psi(t), q, 0)"),
    }
    patches["F5"] = crit_core_patch(n, eps, phi, crit, overlap)

    same = Identification(cot, cot)
    to_handle = ConormalToCritical(cot, crit)
    F1, F2, Z0, F4, F5 = (patches[k] for k in ("F1", "F2", "Z0", "F4", "F5"))
    junctions = [
        Junction("F1->F2", F1, F2, 1.0, -1.0, 1.0, same),
        Junction("F2->Z0", F2, Z0, 1.0, 1.0, 1.0, same),
        Junction("Z0->F4", Z0, F4, circumference - 2 * eps, -1.0, 1.0, same),
        Junction("F4->F5", F4, F5, 1.0, -1.0, -1.0, to_handle),
        Junction("F5->F1", F5, F1, 1.0, -1.0, 1.0, to_handle.inverse()),
    ]
    q0 = unit(n, 0)
    e1 = unit(n, 1)
    fixed = SphereTrack(q0, e1, 0.0)
    ctx = {"n": n, "profiles": p, "epsilon": eps, "phi": phi}
    segs = [
        PathSegment("gamma1", F1, -1.0, 1.0, fixed, context=ctx),
        PathSegment("gamma2", F2, -1.0, 1.0, fixed, context=ctx),
        PathSegment("gamma3", Z0, 1.0, circumference - 2 * eps, SphereTrack(q0, e1, math.pi), context=ctx),
        PathSegment("gamma4", F4, -1.0, 1.0, SphereTrack(-q0, e1, 0.0), context=ctx),
        PathSegment("gamma5", F5, -1.0, 1.0, fixed, formula="crit_core", context=ctx),
    ]
    loops = {"gamma5*...*gamma1": Loop("gamma5*...*gamma1", segs, junctions)}
    expected = {
        "loops": {"gamma5*...*gamma1": 2 - n},
        "segments": {
            "gamma1": [0.5, 1e-3],
            "gamma2": [0.0, 1e-6],
            "gamma3": [0.0, 1e-6],
            "gamma4": [0.5, 1e-3],
            "gamma5": [1 - n, 0.05],
        },
    }
    warnings = []
    if n == 2:
        warnings.append("n = 2: the loop index 2 - n vanishes, so index-based conclusions are void")
    params = {"circumference": circumference, "theta_integral": T, "theta_target": target,
              "theta_offset": theta_offset, "psi_overlap": overlap}
    return Scenario("B", n, p, {"cotangent": cot, "handle": crit}, patches, junctions, loops,
                    expected, warnings=warnings, params=params)
