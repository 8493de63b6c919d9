import numpy as np
import pytest

from onechannel.exceptions import NotU11, SingularBeta, SingularBlock
from onechannel.mat2core import (
    G,
    SWAP,
    as_mat2,
    haar_unitary,
    operator_norm,
    phi_flat,
    phi_flat_inv,
    phi_sharp,
    phi_sharp_inv,
    u11_defect,
    u11_eigensystem,
    unitary_defect,
)


def solve_sharp(M):
    """phi_sharp by a linear-system oracle: columns are images of unit inputs.

    With (Psi-, Psi+) = M (Phi-, Phi+), the map sends (Psi-, Phi-) to (Phi+, Psi+).
    """
    out = np.empty((2, 2), dtype=complex)
    for col, (psim, phim) in enumerate([(1, 0), (0, 1)]):
        # unknowns Phi+, Psi+ ; equations: Psi- = a Phi- + b Phi+, Psi+ = c Phi- + d Phi+
        a, b, c, d = M.ravel()
        A = np.array([[b, 0], [d, -1]], dtype=complex)
        rhs = np.array([psim - a * phim, -c * phim])
        out[:, col] = np.linalg.solve(A, rhs)
    return out


class TestPhiMaps:
    def test_swap_maps_to_identity(self):
        assert np.allclose(phi_sharp(SWAP), np.eye(2), atol=1e-15)
        assert np.allclose(phi_flat(SWAP), np.eye(2), atol=1e-15)

    def test_identity_is_singular(self):
        with pytest.raises(SingularBeta):
            phi_sharp(np.eye(2))
        with pytest.raises(SingularBeta):
            phi_flat(np.eye(2))

    def test_imaginary_swap(self):
        M = np.array([[0, 1j], [1j, 0]])
        expected = solve_sharp(M)
        assert np.allclose(expected, np.diag([-1j, 1j]))
        assert np.allclose(phi_sharp(M), expected, atol=1e-15)

    def test_rotated_swap(self):
        z = np.exp(1j * np.pi / 3)
        assert np.allclose(phi_sharp(z * SWAP), np.diag([1 / z, z]), atol=1e-15)
        # the flat layout puts gamma - delta alpha / beta first
        assert np.allclose(phi_flat(z * SWAP), np.diag([z, 1 / z]), atol=1e-15)

    def test_linear_system_oracle(self, rng):
        for M in haar_unitary(2, rng, size=50):
            assert np.allclose(phi_sharp(M), solve_sharp(M), atol=1e-12)

    def test_swap_conjugation(self, rng):
        for M in haar_unitary(2, rng, size=100):
            assert np.allclose(phi_flat(M), SWAP @ phi_sharp(M) @ SWAP, atol=1e-12)
            assert np.allclose(phi_sharp(M), phi_flat(np.linalg.inv(M)), atol=1e-12)

    def test_images_in_u11(self, rng):
        for M in haar_unitary(2, rng, size=200):
            assert u11_defect(phi_sharp(M)) < 1e-10
            assert u11_defect(phi_flat(M)) < 1e-10

    def test_tolerance_argument(self):
        M = np.array([[np.sqrt(1 - 1e-12), 1e-6], [-1e-6, np.sqrt(1 - 1e-12)]])
        phi_sharp(M)
        with pytest.raises(SingularBeta):
            phi_sharp(M, tol_beta=1e-5)


class TestInverseMaps:
    def test_identity(self):
        assert np.allclose(phi_sharp_inv(np.eye(2)), SWAP)

    def test_round_trip(self, rng):
        Ms = haar_unitary(2, rng, size=1000)
        Ms = Ms[np.abs(Ms[:, 0, 1]) > 1e-6]
        worst = max(np.abs(phi_sharp_inv(phi_sharp(M)) - M).max() for M in Ms)
        worst_f = max(np.abs(phi_flat_inv(phi_flat(M)) - M).max() for M in Ms)
        assert worst < 1e-10 and worst_f < 1e-10

    def test_singular_block(self):
        with pytest.raises(SingularBlock):
            phi_sharp_inv(np.array([[0, 1], [1, 1]]))
        with pytest.raises(SingularBlock):
            phi_flat_inv(np.array([[1, 1], [1, 0]]))


class TestDefects:
    def test_u11_defect_examples(self):
        assert u11_defect(np.eye(2)) == 0
        assert u11_defect(np.diag([2, 1])) == pytest.approx(3.0)

    def test_hyperbolic_rotation(self):
        t = 0.7
        B = np.array([[np.cosh(t), np.sinh(t)], [np.sinh(t), np.cosh(t)]])
        assert u11_defect(B) < 1e-14
        assert u11_defect(G) < 1e-15

    def test_unitary_defect(self, rng):
        assert unitary_defect(haar_unitary(5, rng)) < 1e-13
        assert unitary_defect(2 * np.eye(3)) == pytest.approx(3 * np.sqrt(3))
        with pytest.raises(ValueError):
            unitary_defect(np.ones((2, 3)))

    def test_operator_norm(self, rng):
        A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        assert operator_norm(A) == pytest.approx(np.linalg.norm(A, 2), rel=1e-12)

    def test_as_mat2_rejects(self):
        with pytest.raises(ValueError):
            as_mat2(np.ones((3, 3)))
        with pytest.raises(ValueError):
            as_mat2([[np.nan, 0], [0, 1]])


class TestEigensystem:
    def test_elliptic(self):
        phi = 0.4
        T = np.diag([np.exp(-1j * phi), np.exp(1j * phi)])
        es = u11_eigensystem(T)
        assert not es.degenerate
        assert abs(abs(es.lam) - 1) < 1e-12
        ev = np.sort_complex(np.array(es.eigenvalues))
        assert np.allclose(ev, np.sort_complex(np.linalg.eigvals(T)))

    def test_hyperbolic(self):
        t = 0.9
        T = 1j * np.array([[np.cosh(t), np.sinh(t)], [np.sinh(t), np.cosh(t)]])
        es = u11_eigensystem(T)
        assert abs(es.lam) == pytest.approx(np.exp(-t), rel=1e-12)
        mu = np.exp(1j * es.chi) * es.lam
        assert np.allclose(T @ es.eigvec_minus, mu * es.eigvec_minus, atol=1e-12)
        assert np.allclose(T @ es.eigvec_plus, np.exp(1j * es.chi) / es.lam * es.eigvec_plus, atol=1e-12)
        assert 0 <= es.chi < np.pi

    def test_eigvec_normalization(self, rng):
        for M in haar_unitary(2, rng, size=20):
            es = u11_eigensystem(phi_sharp(M) @ phi_sharp(haar_unitary(2, rng)))
            if es.degenerate:
                continue
            for v in (es.eigvec_minus, es.eigvec_plus):
                assert np.linalg.norm(v) == pytest.approx(1.0)
                first = v[np.flatnonzero(np.abs(v) > 1e-14)[0]]
                assert abs(first.imag) < 1e-14 and first.real > 0

    def test_degenerate_identity(self):
        es = u11_eigensystem(np.eye(2))
        assert es.degenerate and es.lam == 1 and es.eigvec_minus is None

    def test_not_u11(self):
        with pytest.raises(NotU11):
            u11_eigensystem(np.diag([2, 1]))

    def test_lambda_relation(self, rng):
        for M in haar_unitary(2, rng, size=100):
            T = phi_sharp(M) @ phi_sharp(haar_unitary(2, rng))
            es = u11_eigensystem(T)
            s = es.lam + 1 / es.lam
            assert abs(s.imag) < 1e-9
            assert abs(es.lam) <= 1 + 1e-12
