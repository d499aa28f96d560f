import numpy as np
import pytest

from handlemaslov.errors import UnsupportedPointError
from handlemaslov.smoothfn import default_profiles
from handlemaslov.spaces import (
    CotProduct,
    CritHandle,
    CylHandle,
    Disc2n,
    Point,
    complex_structure,
    fd_exterior_derivative,
    liouville_field,
    liouville_form,
    morse_function,
    random_point,
    random_unitary,
    sphere_tangent_basis,
    sphere_tangent_vectors,
    symplectic_form,
    volume_form_sq,
)

PROFILES = default_profiles()


def all_spaces(n):
    return [Disc2n(n), CritHandle(n), CylHandle(n, PROFILES), CotProduct(n)]


def zero_section(space, x):
    if space.dim == 2 * space.n:
        return x
    x = x.copy()
    x[2 + space.n:] = 0.0
    return x


class TestSphereBasis:
    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_orthonormal_and_tangent(self, n, rng):
        q = rng.normal(size=(50, n))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        e = sphere_tangent_basis(q)
        gram = np.einsum("kia,kib->kab", e, e)
        assert np.max(np.abs(gram - np.eye(n - 1))) < 1e-13
        assert np.max(np.abs(np.einsum("kia,ki->ka", e, q))) < 1e-13

    def test_tangent_vectors_keep_constraints(self, rng):
        n = 4
        q = rng.normal(size=n)
        q /= np.linalg.norm(q)
        p = rng.normal(size=n)
        p -= p.dot(q) * q
        b = sphere_tangent_vectors(q, p)
        # first-order variation of |q|^2 and <q, p>
        assert np.max(np.abs(q @ b[:n])) < 1e-13
        assert np.max(np.abs(p @ b[:n] + q @ b[n:])) < 1e-13


class TestForms:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_d_lambda_equals_omega(self, n, rng):
        # finite-difference exterior derivative as the oracle
        for space in all_spaces(n):
            for _ in range(25):
                x = random_point(space, rng)
                basis = space.tangent_basis(x)
                v, w = (basis @ rng.normal(size=(basis.shape[1], 2))).T
                # flat and cotangent charts: the sphere constraint is irrelevant
                # for a 1-form written in ambient coordinates
                d = fd_exterior_derivative(space, x, v, w)
                om = space.symplectic_form(x, v, w)
                assert abs(d - om) < 1e-7 * max(1.0, abs(om)), space

    @pytest.mark.parametrize("n", [2, 3])
    def test_liouville_field_duality(self, n, rng):
        for space in (Disc2n(n), CylHandle(n, PROFILES)):
            for _ in range(30):
                x = random_point(space, rng)
                z = space.liouville_field(x)
                basis = space.tangent_basis(x)
                for v in basis.T:
                    assert abs(space.symplectic_form(x, z, v) - space.liouville_form(x, v)) < 1e-12

    def test_flat_liouville_examples(self):
        x = np.array([1.0, 0.0, 0.0, 2.0])
        v = np.array([0.0, 0.0, 1.0, 0.0])
        assert Disc2n(2).liouville_form(x, v) == pytest.approx(0.5)
        assert CritHandle(2).liouville_form(x, v) == pytest.approx(-1.0)

    def test_cot_product_liouville(self):
        space = CotProduct(2)
        x = np.array([0.3, 2.0, 1.0, 0.0, 0.0, 0.5])
        v = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        assert space.liouville_form(x, v) == pytest.approx(-2.0 - 0.5)


class TestComplexStructure:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_compatibility(self, n, rng):
        for space in all_spaces(n):
            x = zero_section(space, random_point(space, rng))
            basis = space.tangent_basis(x)
            for _ in range(10):
                v, w = (basis @ rng.normal(size=(basis.shape[1], 2))).T
                jv, jw = space.complex_structure(x, v), space.complex_structure(x, w)
                assert np.allclose(space.complex_structure(x, jv), -v, atol=1e-13)
                assert space.symplectic_form(x, v, jv) > 0
                assert space.symplectic_form(x, jv, jw) == pytest.approx(space.symplectic_form(x, v, w), abs=1e-12)

    def test_off_zero_section_unsupported(self):
        space = CotProduct(2)
        x = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.3])
        with pytest.raises(UnsupportedPointError):
            space.complex_structure(x, np.zeros(6))
        with pytest.raises(UnsupportedPointError):
            space.volume_form_sq(x, np.zeros((6, 2)))


class TestVolumeForm:
    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_unit_modulus_on_unitary_frames(self, n, rng):
        for space in all_spaces(n):
            x = zero_section(space, random_point(space, rng))
            for _ in range(10):
                frame = space.realify(x, random_unitary(n, rng))
                assert abs(abs(space.volume_form_sq(x, frame)) - 1.0) < 1e-12

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_sign_invariance(self, n, rng):
        for space in all_spaces(n):
            x = zero_section(space, random_point(space, rng))
            frame = space.realify(x, random_unitary(n, rng))
            flipped = frame.copy()
            flipped[:, 0] *= -1
            assert space.volume_form_sq(x, flipped) == pytest.approx(space.volume_form_sq(x, frame), abs=1e-13)

    def test_real_basis_change_keeps_phase(self, rng):
        space = Disc2n(3)
        x = np.zeros(6)
        frame = space.realify(x, random_unitary(3, rng))
        c = rng.normal(size=(3, 3))
        a, b = space.volume_form_sq(x, frame), space.volume_form_sq(x, frame @ c)
        assert np.angle(b / a) == pytest.approx(0.0, abs=1e-12)

    def test_reference_frames(self):
        n = 3
        real = np.vstack([np.eye(n), np.zeros((n, n))])
        assert Disc2n(n).volume_form_sq(np.zeros(2 * n), real) == pytest.approx(1.0)
        assert CritHandle(n).volume_form_sq(np.zeros(2 * n), real) == pytest.approx(-1.0)
        imag = np.vstack([np.zeros((n, n)), np.eye(n)])
        assert Disc2n(n).volume_form_sq(np.zeros(2 * n), imag) == pytest.approx((-1) ** n)

    @pytest.mark.parametrize("k", [-1, 0, 2])
    def test_handle_gauge(self, k):
        n = 4
        space = CylHandle(n, PROFILES, gauge_k=k)
        q = np.eye(n)[1]
        e = sphere_tangent_basis(q)
        frame = np.zeros((2 + 2 * n, n))
        frame[0, 0] = 1.0
        frame[2: 2 + n, 1:] = e
        for t in (-1.0, 0.0, 1.0):
            x = np.concatenate([[t, 0.0], q, np.zeros(n)])
            expect = np.exp(1j * np.pi * (t + 1) * ((n - 2) / 2 + k))
            assert space.volume_form_sq(x, frame) == pytest.approx(expect, abs=1e-13)

    def test_wrong_frame_shape(self):
        with pytest.raises(ValueError):
            Disc2n(3).volume_form_sq(np.zeros(6), np.zeros((6, 2)))


class TestMorseAndPoints:
    def test_handle_morse_values(self):
        space = CylHandle(3, PROFILES)
        x = np.array([0.5, 0.05, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        f1, f2 = space.morse_parts(x)
        assert f1 == pytest.approx(0.05**2 - 0.25)
        assert f2 == pytest.approx(PROFILES.mu * PROFILES.h(0.0))

    def test_morse_differential_matches_fd(self, rng):
        space = CylHandle(3, PROFILES)
        for _ in range(20):
            x = random_point(space, rng)
            d1, d2 = space.morse_differential(x)
            for v in space.tangent_basis(x).T:
                h = 1e-6
                fd = (space.morse_function(x + h * v) - space.morse_function(x - h * v)) / (2 * h)
                assert np.dot(d1 + d2, v) == pytest.approx(fd, abs=1e-7)

    def test_point_validation(self):
        with pytest.raises(ValueError):
            Point(CotProduct(2), np.array([0.0, 0.0, 2.0, 0.0, 0.0, 0.0]))
        with pytest.raises(ValueError):
            Point(CylHandle(2, PROFILES), np.array([0.0, 0.5, 1.0, 0.0, 0.0, 0.0]))
        with pytest.raises(ValueError):
            Point(Disc2n(2), np.zeros(5))

    def test_point_operations(self):
        pt = Point(Disc2n(2), np.array([1.0, 0.0, 0.0, 0.0]))
        v = np.array([0.0, 0.0, 1.0, 0.0])
        assert liouville_form(pt, v) == pytest.approx(0.5)
        assert symplectic_form(pt, np.array([1.0, 0, 0, 0]), v) == pytest.approx(1.0)
        assert np.allclose(liouville_field(pt), [0.5, 0, 0, 0])
        assert np.allclose(complex_structure(pt, v), [-1.0, 0, 0, 0])
        assert volume_form_sq(pt, np.array([[1.0, 0], [0, 1], [0, 0], [0, 0]])) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            volume_form_sq(pt, np.eye(4)[:, :3])
        with pytest.raises(UnsupportedPointError):
            morse_function(pt)

    def test_circle_wraps(self):
        space = CotProduct(2, circumference=4.0)
        a = np.array([1.9, 0, 1.0, 0, 0, 0])
        b = np.array([-1.9, 0, 1.0, 0, 0, 0])
        assert space.distance(a, b) == pytest.approx(0.2)
