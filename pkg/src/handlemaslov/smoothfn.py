"""One-dimensional profile functions and adaptive quadrature.

Every profile is a C^2 piecewise polynomial (or the reciprocal of one) with
exact first and second derivatives. C^2 is enough for everything downstream:
the Lagrangian maps use at most second derivatives of their profiles.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from handlemaslov.errors import ConstructionError, NumericError, ParameterError
from handlemaslov.report import CheckReport

EPSILON_MAX = 1.0 / math.sqrt(2.0)


def _as_output(values, scalar):
    if scalar:
        return float(values)
    return values


@dataclass(frozen=True)
class SmoothFn1D:
    """Scalar function on an interval with analytic first/second derivatives.

    ``f``, ``d1`` and ``d2`` must accept numpy arrays. ``flat_regions`` lists
    closed subintervals on which the function is constant and ``knots`` the
    points where the second derivative may fail to be smooth; quadrature
    splits there.
    """

    f: Callable
    d1: Callable
    d2: Callable
    domain: tuple = (-1.0, 1.0)
    flat_regions: tuple = ()
    knots: tuple = ()
    name: str = ""

    def __call__(self, t):
        return self.f(t)

    def deriv(self, t, order=1):
        if order == 0:
            return self.f(t)
        if order == 1:
            return self.d1(t)
        if order == 2:
            return self.d2(t)
        raise ValueError("only derivatives up to order 2 are available")

    def scaled(self, c, name=None):
        c = float(c)
        knots = self.knots if c != 0.0 else ()
        return SmoothFn1D(
            lambda t: c * self.f(t),
            lambda t: c * self.d1(t),
            lambda t: c * self.d2(t),
            self.domain,
            self.flat_regions,
            knots,
            name or self.name,
        )

    @classmethod
    def piecewise_polynomial(cls, knots, polys, domain=(-1.0, 1.0), name="", flat_regions=()):
        """Glue ``len(knots) + 1`` polynomials in the global variable ``t``."""
        knots = np.asarray(knots, dtype=float)
        polys = [Polynomial(p) if not isinstance(p, Polynomial) else p for p in polys]
        if len(polys) != len(knots) + 1:
            raise ValueError("need exactly one more piece than knots")
        derivs = [[p, p.deriv(1), p.deriv(2)] for p in polys]

        def make(order):
            def evaluate(t):
                scalar = np.ndim(t) == 0
                t = np.asarray(t, dtype=float)
                idx = np.searchsorted(knots, t, side="right")
                out = np.zeros_like(t)
                for k, d in enumerate(derivs):
                    mask = idx == k
                    if np.any(mask):
                        out[mask] = d[order](t[mask])
                return _as_output(out, scalar)

            return evaluate

        return cls(make(0), make(1), make(2), tuple(domain), tuple(flat_regions),
                   tuple(float(k) for k in knots), name)

    @classmethod
    def polynomial(cls, coeffs, domain=(-1.0, 1.0), name=""):
        return cls.piecewise_polynomial([], [Polynomial(coeffs)], domain, name)

    @classmethod
    def constant(cls, value, domain=(-1.0, 1.0), name=""):
        return cls.piecewise_polynomial([], [Polynomial([value])], domain, name,
                                        flat_regions=(tuple(domain),))

    def reciprocal(self, name=""):
        """``1/self``; the caller guarantees the function has no zeros."""
        m, m1, m2 = self.f, self.d1, self.d2

        def f(t):
            return 1.0 / m(t)

        def d1(t):
            mt = m(t)
            return -m1(t) / mt**2

        def d2(t):
            mt = m(t)
            return -m2(t) / mt**2 + 2.0 * m1(t) ** 2 / mt**3

        return SmoothFn1D(f, d1, d2, self.domain, self.flat_regions, self.knots, name)


# ---------------------------------------------------------------------------
# quadrature

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes are the odd-indexed Kronrod nodes
_WG_FULL = np.zeros(15)
_WG_FULL[[1, 3, 5]] = _WG[:3]
_WG_FULL[7] = _WG[3]
_WG_FULL[[9, 11, 13]] = _WG[2::-1]


def _gk15(f, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    values = np.asarray(f(mid + half * _NODES), dtype=float)
    k = half * np.dot(_WK, values)
    g = half * np.dot(_WG_FULL, values)
    return k, abs(k - g)


def quadrature(f, a, b, tol=1e-12, points=None, max_intervals=4000):
    """Globally adaptive Gauss-Kronrod (7/15) integral of ``f`` over [a, b].

    Returns ``(value, abserr)`` with ``abserr <= tol``. ``f`` must be
    vectorized. If ``f`` is a :class:`SmoothFn1D` its knots are used as
    initial breakpoints.
    """
    a = float(a)
    b = float(b)
    if a == b:
        return 0.0, 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    if isinstance(f, SmoothFn1D):
        lo, hi = f.domain
        if a < lo - 1e-12 or b > hi + 1e-12:
            raise ParameterError(f"[{a}, {b}] is not inside the domain {f.domain}")
        extra = f.knots
    else:
        extra = ()
    cuts = sorted({a, b, *(p for p in (points or ()) if a < p < b), *(p for p in extra if a < p < b)})

    heap = []
    total = 0.0
    err = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        val, e = _gk15(f, lo, hi)
        heapq.heappush(heap, (-e, lo, hi, val))
        total += val
        err += e

    while err > tol or not math.isfinite(err):
        if not math.isfinite(err):
            raise NumericError("quadrature met a non-finite integrand value")
        if len(heap) >= max_intervals:
            raise NumericError(f"quadrature did not converge: error {err:.3e} > {tol:.1e}")
        neg_e, lo, hi, val = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            raise NumericError("quadrature interval collapsed below machine resolution")
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
        total += v1 + v2 - val
        err += e1 + e2 + neg_e
        # recompute to keep the running sums free of drift
        if len(heap) % 64 == 0:
            total = sum(item[3] for item in heap)
            err = sum(-item[0] for item in heap)
    total = math.fsum(item[3] for item in heap)
    err = sum(-item[0] for item in heap)
    return sign * total, err


# ---------------------------------------------------------------------------
# profile constructions

def _smoothstep_polys(kind):
    """Smoothstep s on [0,1] with s(0)=0, s(1)=1 and its antiderivative."""
    if kind == "cubic":
        s = Polynomial([0, 0, 3, -2])
    elif kind == "quintic":
        s = Polynomial([0, 0, 0, 10, -15, 6])
    elif kind == "septic":
        s = Polynomial([0, 0, 0, 0, 35, -84, 70, -20])
    else:
        raise ParameterError(f"unknown smoothstep {kind!r}")
    return s, s.integ()


def _affine(scale, shift):
    """The polynomial ``scale * t + shift``."""
    return Polynomial([shift, scale])


def make_psi(epsilon, shape="cubic"):
    """Increasing C^2 profile: 0 for t <= -eps, t for t >= eps, psi(0) > 0.

    ``psi' `` is a symmetric smoothstep on [-eps, eps]; symmetry makes the
    integral of psi' over the ramp equal eps, which forces psi(eps) = eps.
    ``shape`` picks the smoothstep (``cubic`` gives psi(0) = 3 eps/16,
    ``quintic`` gives 5 eps/32).
    """
    epsilon = float(epsilon)
    if not 0.0 < epsilon < EPSILON_MAX:
        raise ParameterError(f"epsilon must lie in (0, 1/sqrt(2)), got {epsilon}")
    s, s_int = _smoothstep_polys(shape)
    u = _affine(1.0 / (2 * epsilon), 0.5)
    ramp = 2 * epsilon * s_int(u)
    return SmoothFn1D.piecewise_polynomial(
        [-epsilon, epsilon],
        [Polynomial([0.0]), ramp, Polynomial([0.0, 1.0])],
        name=f"psi[{shape}]",
        flat_regions=((-1.0, -epsilon),),
    )


def make_rho():
    """rho(t) = -t: strictly decreasing with rho(-1)=1, rho(0)=0, rho(1)=-1."""
    return SmoothFn1D.polynomial([0.0, -1.0], name="rho")


def make_step(left, right, a=-0.5, b=0.5, domain=(-1.0, 1.0), name="step"):
    """C^3 septic transition from ``left`` (t <= a) to ``right`` (t >= b)."""
    s, _ = _smoothstep_polys("septic")
    ramp = left + (right - left) * s(_affine(1.0 / (b - a), -a / (b - a)))
    return SmoothFn1D.piecewise_polynomial(
        [a, b], [Polynomial([left]), ramp, Polynomial([right])], domain, name,
        flat_regions=((domain[0], a), (b, domain[1])),
    )


def make_handle_profile(left, right, name="g"):
    """Profile g with g(-1)=left, g(1)=right and g' = 0 outside [-1/2, 1/2]."""
    return make_step(left, right, -0.5, 0.5, name=name)


def make_r(amplitude, base=0.1):
    """Fiber width ``base + amplitude * S'``, constant off [-1/2, 1/2].

    With ``amplitude = max_i |g_i(1) - g_i(-1)|`` this equals
    ``base + max_i |g_i'|`` for handle profiles built by
    :func:`make_handle_profile`. For large amplitudes the base is raised to
    ``amplitude * max|S''|`` so that min r / max|r'| stays above 1/2.
    """
    s, _ = _smoothstep_polys("septic")
    slope = s.deriv(2)
    grid = np.linspace(0.0, 1.0, 2001)
    base = max(base, amplitude * float(np.max(np.abs(slope(grid)))))
    bump = amplitude * s.deriv()(_affine(1.0, 0.5))
    return SmoothFn1D.piecewise_polynomial(
        [-0.5, 0.5], [Polynomial([base]), base + bump, Polynomial([base])], name="r",
        flat_regions=((-1.0, -0.5), (0.5, 1.0)),
    )


def make_h(s0=0.04, s1=0.44):
    """Cut-off on [0, 1]: h = 1 for s <= s0, h = 0 for s >= s1, decreasing."""
    return make_step(1.0, 0.0, s0, s1, domain=(0.0, 1.0), name="h")


def make_phi(floor=0.51, join=0.9):
    """phi = 1/m with m a C^2 smooth max of t^2 and ``floor``.

    m(t) = t^2 for |t| >= join, so phi(t) = t^-2 there; m >= floor keeps
    phi inside (0, 1/floor).
    """
    kappa = join**2 - floor
    if kappa <= 0 or floor - kappa < 0:
        raise ParameterError("need 0 < join^2 - floor < floor")
    # smooth |x|: equals |x| for |x| >= kappa, C^2 across
    p_inner = Polynomial([3.0, 0.0, 6.0, 0.0, -1.0]) / 8.0
    t2 = Polynomial([0.0, 0.0, 1.0])
    d = t2 - floor
    middle = 0.5 * (t2 + floor + kappa * p_inner(d / kappa))
    inner = math.sqrt(floor - kappa)
    m = SmoothFn1D.piecewise_polynomial(
        [-join, -inner, inner, join],
        [t2, middle, Polynomial([floor]), middle, t2],
        name="m",
        flat_regions=((-inner, inner),),
    )
    phi = m.reciprocal(name="phi")
    return phi


def _plateau(half_width, ramp_fraction=0.5):
    """Bump equal to 1 on |t| <= a, 0 for |t| >= b, with b = half_width."""
    b = half_width
    a = b * (1.0 - ramp_fraction)
    s, _ = _smoothstep_polys("septic")
    up = s(_affine(1.0 / (b - a), b / (b - a)))
    down = s(_affine(-1.0 / (b - a), b / (b - a)))
    fn = SmoothFn1D.piecewise_polynomial(
        [-b, -a, a, b],
        [Polynomial([0.0]), up, Polynomial([1.0]), down, Polynomial([0.0])],
        name="theta0",
        flat_regions=((-1.0, -b), (-a, a), (b, 1.0)),
    )
    # symmetric ramps integrate to (b - a) / 2 each
    return fn, a + b


THETA_HALF_WIDTH = 0.5
THETA_MAX_HALF_WIDTH = 0.95


def make_theta(target_integral, half_width=THETA_HALF_WIDTH):
    """theta = c * theta0 with integral ``target_integral`` and |theta| <= 1.

    theta0 is a unit-integral plateau bump supported in [-1/2, 1/2]. When the
    range constraint would be violated the support is widened, up to
    [-0.95, 0.95]; beyond that no admissible theta exists in this family.
    """
    c = float(target_integral)
    if c == 0.0:
        zero = SmoothFn1D.constant(0.0, name="theta")
        return zero
    _, area = _plateau(half_width)
    peak_per_unit = 1.0 / area
    if abs(c) * peak_per_unit > 1.0:
        half_width = half_width * abs(c) * peak_per_unit
        if half_width > THETA_MAX_HALF_WIDTH:
            _, area_max = _plateau(THETA_MAX_HALF_WIDTH)
            raise ConstructionError(
                f"|integral| = {abs(c):.4f} exceeds {area_max:.4f}, the largest integral "
                f"of a bump with |theta| <= 1 vanishing on |t| >= {THETA_MAX_HALF_WIDTH}"
            )
    bump, area = _plateau(half_width)
    return bump.scaled(c / area, name="theta")


def psi_overlap_integral(psi, epsilon):
    """P = int_{-1}^{1} psi(tau) psi'(-tau) dtau."""
    value, _ = quadrature(lambda s: psi(s) * psi.d1(-s), -1.0, 1.0, points=(-epsilon, epsilon))
    return value


def phi_moment_integral(phi):
    """Q = int_{-1}^{1} (2 phi(tau) + tau phi'(tau)) dtau."""
    value, _ = quadrature(lambda s: 2.0 * phi(s) + s * phi.d1(s), -1.0, 1.0, points=phi.knots)
    return value


def theta_target(psi, phi, epsilon):
    """Integral of theta that makes the mutation Lagrangian's primitives glue."""
    eps = float(epsilon)
    q = phi_moment_integral(phi)
    p = psi_overlap_integral(psi, eps)
    return -(2 * eps / (1 - 2 * eps)) * q - (4 * eps / (1 - 2 * eps)) * p


def surgery_end_value(psi, epsilon):
    """I = int_{-1}^{1} (psi psi'(-.) + psi(-.) psi') ; f_i(1) = (-1)^i I / 2."""
    value, _ = quadrature(lambda s: psi(s) * psi.d1(-s) + psi(-s) * psi.d1(s), -1.0, 1.0,
                          points=(-epsilon, epsilon))
    return value


@dataclass(frozen=True)
class ProfileSet:
    psi: SmoothFn1D
    rho: SmoothFn1D
    theta: SmoothFn1D
    phi: SmoothFn1D
    h: SmoothFn1D
    r: SmoothFn1D
    g_handle: tuple
    epsilon: float
    mu: float
    delta: float
    phi_margin: float = 0.1
    meta: dict = field(default_factory=dict, compare=False)


def default_profiles(epsilon=0.05, mu=0.05, delta=0.7, psi_shape="cubic", theta_integral=0.0):
    """The profile set used throughout, for a given epsilon.

    The handle profiles g_1, g_2 are fixed by the surgery primitives:
    g_i(-1) = -f_i(1), g_i(1) = 0. ``theta`` defaults to zero; the mutation
    scenario replaces it by the theta solving its gluing constraint.
    """
    psi = make_psi(epsilon, psi_shape)
    big_i = surgery_end_value(psi, epsilon)
    f_end = (-0.5 * big_i, 0.5 * big_i)
    g = (make_handle_profile(-f_end[0], 0.0, "g1"), make_handle_profile(-f_end[1], 0.0, "g2"))
    amplitude = max(abs(v) for v in f_end)
    return ProfileSet(
        psi=psi,
        rho=make_rho(),
        theta=make_theta(theta_integral),
        phi=make_phi(),
        h=make_h(),
        r=make_r(amplitude),
        g_handle=g,
        epsilon=float(epsilon),
        mu=float(mu),
        delta=float(delta),
        meta={"surgery_end_values": f_end, "psi_shape": psi_shape},
    )


def with_handle_profiles(p: ProfileSet, g1, g2, rebuild_r=False):
    """Swap in handle profiles; optionally rebuild r around them."""
    if not rebuild_r:
        return replace(p, g_handle=(g1, g2))
    t = np.linspace(-1, 1, 4001)
    amp = max(float(np.max(np.abs(g.d1(t)))) for g in (g1, g2)) / (35.0 / 16.0)
    return replace(p, g_handle=(g1, g2), r=make_r(amp))


# ---------------------------------------------------------------------------
# validation

def derivative_errors(fn: SmoothFn1D, n=100, step=None, rng=None):
    """Max relative error of d1 (and d2) against central differences.

    The default step is 1e-5 shrunk with the narrowest piece between knots;
    samples avoid the knots by more than ``3 * step``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    lo, hi = fn.domain
    if step is None:
        widths = np.diff(sorted({lo, hi, *fn.knots}))
        step = min(1e-5, 1e-4 * float(np.min(widths)))
    t = rng.uniform(lo + 3 * step, hi - 3 * step, size=4 * n)
    if fn.knots:
        dist = np.min(np.abs(t[:, None] - np.asarray(fn.knots)[None, :]), axis=1)
        t = t[dist > 3 * step]
    t = t[:n]
    fd1 = (fn(t + step) - fn(t - step)) / (2 * step)
    # five-point stencil: exact on the low-degree pieces, so only rounding remains
    fd2 = (fn.d1(t - 2 * step) - 8 * fn.d1(t - step) + 8 * fn.d1(t + step)
           - fn.d1(t + 2 * step)) / (12 * step)
    d1 = fn.d1(t)
    d2 = fn.d2(t)
    e1 = np.abs(d1 - fd1) / np.maximum(1.0, np.abs(d1))
    e2 = np.abs(d2 - fd2) / np.maximum(1.0, np.abs(d2))
    return float(np.max(e1)), float(np.max(e2))


def flat_deviation(fn: SmoothFn1D, n=1000):
    worst = 0.0
    for lo, hi in fn.flat_regions:
        t = np.linspace(lo, hi, n)
        v = fn(t)
        worst = max(worst, float(np.max(np.abs(v - v[0]))))
    return worst


def validate_profiles(p: ProfileSet, n_samples=2001, seed=0) -> CheckReport:
    """Test every profile invariant by dense sampling; failures are entries."""
    rep = CheckReport()
    eps = p.epsilon
    t = np.linspace(-1.0, 1.0, n_samples)

    rep.add("epsilon range", 0.0 < eps < EPSILON_MAX,
            max(-eps, eps - EPSILON_MAX), 0.0, witness=eps)
    left = t[t <= -eps]
    right = t[t >= eps]
    rep.add_max("psi zero left", np.abs(p.psi(left)) if left.size else [0.0], 1e-12,
                witnesses=list(left) if left.size else None)
    rep.add_max("psi identity right", np.abs(p.psi(right) - right) if right.size else [0.0],
                1e-12, witnesses=list(right) if right.size else None)
    psi0 = float(p.psi(0.0))
    rep.add("psi(0) positive", psi0 > 0, -psi0, 0.0, witness=psi0)
    rep.add_max("psi increasing", -p.psi.d1(t), 1e-14, witnesses=list(t))

    rho_end = max(abs(p.rho(-1.0) - 1.0), abs(p.rho(0.0)), abs(p.rho(1.0) + 1.0))
    rep.add("rho endpoint", rho_end < 1e-12, rho_end, 1e-12)
    rep.add_max("rho strictly decreasing", p.rho.d1(t), 0.0, witnesses=list(t))

    ends = np.concatenate([t[t <= -0.5], t[t >= 0.5]])
    r_ends = p.r(ends)
    rep.add_max("r constant on ends", np.abs(r_ends - r_ends[0]), 1e-12, witnesses=list(ends))
    rep.add_max("r positive", -p.r(t), 0.0, witnesses=list(t))
    mid = t[np.abs(t) <= 0.5]
    max_dr = float(np.max(np.abs(p.r.d1(t))))
    bound = math.inf if max_dr == 0 else float(np.min(p.r(t))) / max_dr
    excess = float(np.max(np.abs(p.rho(mid)))) - bound
    rep.add("rho bound", excess < 0, excess, 0.0, witness={"bound": bound})

    phi = p.phi(t)
    rep.add("phi range", bool(np.all(phi > 0) and np.all(phi < 2)),
            max(float(np.max(phi)) - 2.0, -float(np.min(phi))), 0.0)
    outer = t[np.abs(t) >= 1.0 - p.phi_margin]
    rep.add_max("phi boundary", np.abs(p.phi(outer) - outer**-2.0), 1e-12, witnesses=list(outer))

    near = t[np.abs(t) >= THETA_MAX_HALF_WIDTH]
    rep.add_max("theta vanishes near ends", np.abs(p.theta(near)), 1e-12, witnesses=list(near))
    rep.add("theta range", float(np.max(np.abs(p.theta(t)))) <= 1.0,
            float(np.max(np.abs(p.theta(t)))) - 1.0, 0.0)

    s = np.linspace(0.0, 1.0, n_samples)
    h_end = max(abs(float(p.h(0.0)) - 1.0), abs(float(p.h(1.0))))
    rep.add("h endpoints", h_end < 1e-12, h_end, 1e-12)
    rep.add_max("h decreasing", p.h.d1(s), 1e-14, witnesses=list(s))

    for k, g in enumerate(p.g_handle, start=1):
        off = t[np.abs(t) > 0.5]
        rep.add_max(f"g{k}' flat off [-1/2,1/2]", np.abs(g.d1(off)), 1e-12, witnesses=list(off))
        rep.add_max(f"g{k} contained", np.abs(g.d1(t)) - p.r(t), 0.0, witnesses=list(t))

    rng = np.random.default_rng(seed)
    named = {"psi": p.psi, "rho": p.rho, "theta": p.theta, "phi": p.phi, "h": p.h, "r": p.r,
             "g1": p.g_handle[0], "g2": p.g_handle[1]}
    for name, fn in named.items():
        e1, e2 = derivative_errors(fn, rng=rng)
        rep.add(f"derivatives {name}", max(e1, e2) < 1e-6, max(e1, e2), 1e-6)
        rep.add(f"flat {name}", flat_deviation(fn) < 1e-12, flat_deviation(fn), 1e-12)
    return rep
