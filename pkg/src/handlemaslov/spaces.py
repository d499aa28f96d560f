"""Model exact symplectic spaces.

Four charts are supported:

``Disc2n``      (x, y) in R^n x R^n, lambda = (x dy - y dx)/2.
``CylHandle``   (t, y, q, p): the cylindrical handle T*D^1 x T*S^{n-1} with
                lambda = -y dt + d(rho(t) y) - p dq + mu d(h(|p|^2) <p, grad q_0>).
``CritHandle``  (x, y) in R^n x R^n, lambda = -2 y dx - x dy.
``CotProduct``  (t, y, q, p): T*(S^1_l x S^{n-1}) with lambda = -y dt - p dq.

Sphere points are unit vectors q in R^n with fibre coordinate p orthogonal
to q. All form evaluations are vectorized over leading axes; frames are
``(dim, n)`` arrays whose columns are tangent vectors in chart components.

The complex structure and quadratic volume form on the cotangent-type
charts use the horizontal/vertical splitting, which is canonical only on
the zero section of the sphere factor; evaluating them at p != 0 raises
:class:`UnsupportedPointError`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from handlemaslov.errors import ParameterError, UnsupportedPointError

POINT_TOL = 1e-12
ZERO_SECTION_TOL = 1e-9


def sphere_tangent_basis(q):
    """Orthonormal basis of the tangent space at q, as ``(..., n, n-1)``.

    Columns 1.. of a Householder reflection that swaps e_0 and +-q.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[-1]
    e0 = np.zeros(n)
    e0[0] = 1.0
    sgn = np.where(q[..., :1] > 0, 1.0, -1.0)
    w = e0 + sgn * q
    ww = np.sum(w * w, axis=-1)[..., None, None]
    h = np.eye(n) - 2.0 * w[..., :, None] * w[..., None, :] / ww
    return h[..., :, 1:]


def sphere_tangent_vectors(q, p=None):
    """Basis of T_{(q,p)} T*S^{n-1} inside R^n x R^n, as ``(..., 2n, 2n-2)``.

    Columns are (e_a, -<e_a, p> q) followed by (0, e_a), which respect
    |q| = 1 and <q, p> = 0 to first order.
    """
    q = np.asarray(q, dtype=float)
    e = sphere_tangent_basis(q)
    if p is None:
        p = np.zeros_like(q)
    ep = np.einsum("...ia,...i->...a", e, p)
    top = np.concatenate([e, np.zeros_like(e)], axis=-1)
    bottom = np.concatenate([-q[..., :, None] * ep[..., None, :], e], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


class AmbientSpace:
    """Base class; subclasses implement the closed-form structures."""

    kind = "abstract"

    def __init__(self, n):
        n = int(n)
        if n < 2:
            raise ParameterError(f"n must be >= 2, got {n}")
        self.n = n

    @property
    def dim(self):
        raise NotImplementedError

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"{self.kind} expects {self.dim} coordinates, got {x.shape[-1]}")
        return x

    def canonical(self, x):
        return np.asarray(x, dtype=float)

    def distance(self, x, y):
        return float(np.linalg.norm(self.canonical(x) - self.canonical(y)))

    def tangent_basis(self, x):
        """Real basis of the tangent space at x as columns ``(dim, 2n)``."""
        return np.eye(self.dim)

    def liouville_field(self, x):
        raise UnsupportedPointError(f"Liouville field of {self.kind} is not implemented")

    def morse_function(self, x):
        raise UnsupportedPointError(f"no Morse function implemented on {self.kind}")

    def describe(self):
        return {"kind": self.kind, "n": self.n}

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n})"


class _FlatSpace(AmbientSpace):
    """Shared (x, y) chart with omega = dx ^ dy and J(dx, dy) = (-dy, dx)."""

    @property
    def dim(self):
        return 2 * self.n

    def split(self, v):
        v = np.asarray(v, dtype=float)
        return v[..., : self.n], v[..., self.n:]

    def symplectic_form(self, x, v, w):
        vx, vy = self.split(v)
        wx, wy = self.split(w)
        return np.sum(vx * wy - wx * vy, axis=-1)

    def complex_structure(self, x, v):
        vx, vy = self.split(v)
        return np.concatenate([-vy, vx], axis=-1)

    def complexify(self, x, frame):
        frame = np.asarray(frame, dtype=float)
        return frame[: self.n] + 1j * frame[self.n:]

    def realify(self, x, cframe):
        return np.concatenate([cframe.real, cframe.imag], axis=0)

    def _det_sq(self, x, frame):
        frame = np.asarray(frame, dtype=float)
        if frame.shape != (self.dim, self.n):
            raise ValueError(f"frame must have shape {(self.dim, self.n)}, got {frame.shape}")
        return np.linalg.det(self.complexify(x, frame)) ** 2


class Disc2n(_FlatSpace):
    kind = "Disc2n"

    def liouville_form(self, x, v):
        px, py = self.split(x)
        vx, vy = self.split(v)
        return 0.5 * np.sum(px * vy - py * vx, axis=-1)

    def liouville_field(self, x):
        return 0.5 * np.asarray(x, dtype=float)

    def volume_form_sq(self, x, frame):
        return complex(self._det_sq(x, frame))


class CritHandle(_FlatSpace):
    """Critical Weinstein handle; J and Omega^2 constant in the chart.

    Omega^2 is minus the standard form, so the core disc frame
    (d/dx_1, ..., d/dx_n) evaluates to -1.
    """

    kind = "CritHandle"

    def liouville_form(self, x, v):
        px, py = self.split(x)
        vx, vy = self.split(v)
        return np.sum(-2.0 * py * vx - px * vy, axis=-1)

    def volume_form_sq(self, x, frame):
        return complex(-self._det_sq(x, frame))


class _CotangentChart(AmbientSpace):
    """(t, y, q, p) chart of T*(interval or circle) x T*S^{n-1}."""

    @property
    def dim(self):
        return 2 + 2 * self.n

    def split(self, v):
        v = np.asarray(v, dtype=float)
        n = self.n
        return v[..., 0], v[..., 1], v[..., 2: 2 + n], v[..., 2 + n:]

    def check_point(self, x):
        x = super().check_point(x)
        _, _, q, p = self.split(x)
        bad_q = np.max(np.abs(np.linalg.norm(q, axis=-1) - 1.0))
        bad_p = np.max(np.abs(np.sum(q * p, axis=-1)))
        if bad_q > POINT_TOL or bad_p > POINT_TOL:
            raise ValueError(f"not on T*S^{self.n - 1}: ||q|-1| = {bad_q:.2e}, <q,p> = {bad_p:.2e}")
        return x

    def tangent_basis(self, x):
        _, _, q, p = self.split(x)
        sphere = sphere_tangent_vectors(q, p)
        basis = np.zeros((self.dim, 2 * self.n))
        basis[0, 0] = 1.0
        basis[1, 1] = 1.0
        basis[2:, 2:] = sphere
        return basis

    def symplectic_form(self, x, v, w):
        vt, vy, vq, vp = self.split(v)
        wt, wy, wq, wp = self.split(w)
        return vt * wy - wt * vy + np.sum(vq * wp - wq * vp, axis=-1)

    def _require_zero_section(self, x):
        _, _, q, p = self.split(x)
        if np.max(np.abs(p)) > ZERO_SECTION_TOL:
            raise UnsupportedPointError(
                f"{self.kind}: complex structure is only implemented on p = 0 (|p| = "
                f"{np.max(np.abs(p)):.2e})"
            )
        return q

    def complex_structure(self, x, v):
        self._require_zero_section(x)
        vt, vy, vq, vp = self.split(v)
        return np.concatenate([-vy[..., None], vt[..., None], -vp, vq], axis=-1)

    def complexify(self, x, frame):
        """Components in the complex basis (d/dt, e_1, ..., e_{n-1})."""
        q = self._require_zero_section(x)
        frame = np.asarray(frame, dtype=float)
        n = self.n
        e = sphere_tangent_basis(q)
        top = frame[0] + 1j * frame[1]
        sph = e.T @ (frame[2: 2 + n] + 1j * frame[2 + n:])
        return np.vstack([top[None, :], sph])

    def realify(self, x, cframe):
        q = self._require_zero_section(x)
        e = sphere_tangent_basis(q)
        sph = e @ cframe[1:]
        return np.vstack([cframe[0].real[None], cframe[0].imag[None], sph.real, sph.imag])

    def _det_sq(self, x, frame):
        frame = np.asarray(frame, dtype=float)
        if frame.shape != (self.dim, self.n):
            raise ValueError(f"frame must have shape {(self.dim, self.n)}, got {frame.shape}")
        return np.linalg.det(self.complexify(x, frame)) ** 2


class CylHandle(_CotangentChart):
    """Cylindrical handle D*_{r(t)} D^1 x D*_delta S^{n-1}.

    ``gauge_k`` selects the volume-form extension over the handle:
    Omega^2 = exp(i pi (t+1) ((n-2)/2 + k)) * (standard product form).
    All members of the family agree at t = -1 and, modulo 2 pi, at t = 1.
    """

    kind = "CylHandle"

    def __init__(self, n, profiles, gauge_k=0):
        super().__init__(n)
        self.profiles = profiles
        self.gauge_k = int(gauge_k)

    def describe(self):
        p = self.profiles
        return {"kind": self.kind, "n": self.n, "gauge_k": self.gauge_k,
                "mu": p.mu, "delta": p.delta}

    def check_point(self, x):
        x = super().check_point(x)
        t, y, _, p = self.split(x)
        slack = 1e-12
        if (np.any(np.abs(t) > 1 + slack) or np.any(np.abs(y) > self.profiles.r(np.clip(t, -1, 1)) + slack)
                or np.any(np.linalg.norm(p, axis=-1) > self.profiles.delta + slack)):
            raise ValueError("point lies outside the handle |t| <= 1, |y| <= r(t), |p| <= delta")
        return x

    def _sphere_potential(self, q, p):
        """G = h(|p|^2) <p, grad q_0> and its q/p gradients."""
        prof = self.profiles
        s = np.sum(p * p, axis=-1)
        hs = np.asarray(prof.h(s))
        dh = np.asarray(prof.h.d1(s))
        pq = np.sum(p * q, axis=-1)
        a = p[..., 0] - q[..., 0] * pq
        g = hs * a
        e0 = np.zeros(self.n)
        e0[0] = 1.0
        da_dq = -(pq[..., None] * e0) - q[..., :1] * p
        da_dp = e0 - q[..., :1] * q
        dg_dq = hs[..., None] * da_dq
        dg_dp = 2.0 * (dh * a)[..., None] * p + hs[..., None] * da_dp
        return g, dg_dq, dg_dp

    def liouville_form(self, x, v):
        prof = self.profiles
        t, y, q, p = self.split(x)
        vt, vy, vq, vp = self.split(v)
        d1 = (-y + prof.rho.d1(t) * y) * vt + prof.rho(t) * vy
        _, dg_dq, dg_dp = self._sphere_potential(q, p)
        sphere = -np.sum(p * vq, axis=-1) + prof.mu * (
            np.sum(dg_dq * vq, axis=-1) + np.sum(dg_dp * vp, axis=-1))
        return d1 + sphere

    def sphere_liouville_field(self, q, p):
        """Solve omega(Z, .) = lambda(.) on T*S^{n-1}; vectorized over points."""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        n = self.n
        basis = sphere_tangent_vectors(q, p)  # (..., 2n, 2n-2)
        bq, bp = basis[..., :n, :], basis[..., n:, :]
        # omega(b_i, b_j) = bq_i . bp_j - bq_j . bp_i
        cross = np.einsum("...ki,...kj->...ij", bq, bp)
        gram = cross - np.swapaxes(cross, -1, -2)
        _, dg_dq, dg_dp = self._sphere_potential(q, p)
        mu = self.profiles.mu
        lam = (np.einsum("...k,...kj->...j", -p + mu * dg_dq, bq)
               + mu * np.einsum("...k,...kj->...j", dg_dp, bp))
        # omega(Z, b_j) = sum_i c_i gram[i, j] = lam_j
        coeff = np.linalg.solve(np.swapaxes(gram, -1, -2), lam[..., None])[..., 0]
        return np.einsum("...ki,...i->...k", basis, coeff)

    def liouville_field(self, x):
        prof = self.profiles
        x = np.asarray(x, dtype=float)
        t, y, q, p = self.split(x)
        out = np.empty_like(x)
        out[..., 0] = prof.rho(t)
        out[..., 1] = (1.0 - prof.rho.d1(t)) * y
        out[..., 2:] = self.sphere_liouville_field(q, p)
        return out

    def morse_parts(self, x):
        """(f on the D^1 factor, f on the sphere factor)."""
        prof = self.profiles
        t, y, q, p = self.split(x)
        s = np.sum(p * p, axis=-1)
        return y**2 - t**2, s + prof.mu * prof.h(s) * q[..., 0]

    def morse_function(self, x):
        a, b = self.morse_parts(x)
        return a + b

    def morse_differential(self, x):
        """Ambient gradients of the two Morse summands, chart-shaped."""
        prof = self.profiles
        x = np.asarray(x, dtype=float)
        t, y, q, p = self.split(x)
        s = np.sum(p * p, axis=-1)
        d_d1 = np.zeros_like(x)
        d_d1[..., 0] = -2.0 * t
        d_d1[..., 1] = 2.0 * y
        d_sph = np.zeros_like(x)
        d_sph[..., 2] = prof.mu * prof.h(s)
        d_sph[..., 2 + self.n:] = (2.0 + 2.0 * prof.mu * prof.h.d1(s) * q[..., 0])[..., None] * p
        return d_d1, d_sph

    def gauge_phase(self, t):
        return np.exp(1j * np.pi * (t + 1.0) * ((self.n - 2) / 2.0 + self.gauge_k))

    def volume_form_sq(self, x, frame):
        t = float(np.asarray(x, dtype=float)[0])
        return complex(self.gauge_phase(t) * self._det_sq(x, frame))


class CotProduct(_CotangentChart):
    """T*(S^1_l x S^{n-1}) with lambda = -y dt - p dq and product Omega^2."""

    kind = "CotProduct"

    def __init__(self, n, circumference=4.0):
        super().__init__(n)
        if circumference <= 2.0:
            raise ParameterError("circle circumference must exceed 2 so [-1,1] embeds")
        self.circumference = float(circumference)

    def describe(self):
        return {"kind": self.kind, "n": self.n, "circumference": self.circumference}

    def canonical(self, x):
        x = np.array(x, dtype=float)
        ell = self.circumference
        x[..., 0] = (x[..., 0] + 0.5 * ell) % ell - 0.5 * ell
        return x

    def distance(self, x, y):
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        ell = self.circumference
        d[..., 0] = (d[..., 0] + 0.5 * ell) % ell - 0.5 * ell
        return float(np.linalg.norm(d))

    def liouville_form(self, x, v):
        t, y, q, p = self.split(x)
        vt, vy, vq, vp = self.split(v)
        return -y * vt - np.sum(p * vq, axis=-1)

    def volume_form_sq(self, x, frame):
        return complex(self._det_sq(x, frame))


@dataclass(frozen=True)
class Point:
    space: AmbientSpace
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", self.space.check_point(self.coords))


# Module-level operations on Points.

def liouville_form(pt: Point, v):
    return float(pt.space.liouville_form(pt.coords, np.asarray(v, dtype=float)))


def symplectic_form(pt: Point, v, w):
    return float(pt.space.symplectic_form(pt.coords, np.asarray(v, float), np.asarray(w, float)))


def liouville_field(pt: Point):
    return pt.space.liouville_field(pt.coords)


def complex_structure(pt: Point, v):
    return pt.space.complex_structure(pt.coords, np.asarray(v, dtype=float))


def volume_form_sq(pt: Point, frame):
    frame = np.asarray(frame, dtype=float)
    if frame.ndim != 2 or frame.shape[1] != pt.space.n:
        raise ValueError(f"a frame needs exactly n = {pt.space.n} vectors")
    return pt.space.volume_form_sq(pt.coords, frame)


def morse_function(pt: Point):
    return float(pt.space.morse_function(pt.coords))


def fd_exterior_derivative(space, x, v, w, step=1e-6):
    """d(lambda)(v, w) by central differences with constant extensions."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    dvw = (space.liouville_form(x + step * v, w) - space.liouville_form(x - step * v, w)) / (2 * step)
    dwv = (space.liouville_form(x + step * w, v) - space.liouville_form(x - step * w, v)) / (2 * step)
    return dvw - dwv


def random_point(space, rng, radius=0.9):
    """Random chart point; on the sphere factor p is tangent with |p| < delta."""
    n = space.n
    if isinstance(space, _FlatSpace):
        z = rng.normal(size=2 * n)
        return radius * rng.uniform() ** (1 / (2 * n)) * z / np.linalg.norm(z)
    q = rng.normal(size=n)
    q /= np.linalg.norm(q)
    p = rng.normal(size=n)
    p -= np.dot(p, q) * q
    delta = getattr(getattr(space, "profiles", None), "delta", 1.0)
    p *= delta * rng.uniform() / np.linalg.norm(p)
    if isinstance(space, CylHandle):
        t = rng.uniform(-1, 1)
        y = space.profiles.r(t) * rng.uniform(-1, 1)
    else:
        t = rng.uniform(0, space.circumference)
        y = rng.uniform(-1, 1)
    return np.concatenate([[t, y], q, p])


def random_unitary(n, rng):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    qm, r = np.linalg.qr(z)
    return qm * (np.diag(r) / np.abs(np.diag(r)))
