"""Small dense linear algebra for 2x2 transfer and scattering blocks.

All functions accept a single ``(2, 2)`` array.  The underscore-prefixed
kernels also accept stacks of shape ``(..., 2, 2)`` and perform no checks;
they are what the grid sweeps in the other modules use.

Conventions
-----------
A 2x2 block is written ``M = [[alpha, beta], [gamma, delta]]``.  The two
rewiring maps turn the scattering relation ``(psi_-, psi_+) = M (phi_-, phi_+)``
into transfer relations::

    (phi_+, psi_+) = phi_sharp(M) (psi_-, phi_-)
    (psi_+, phi_+) = phi_flat(M)  (phi_-, psi_-)

Both send U(2) into U(1,1), the group preserving ``G = diag(1, -1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NotU11, SingularBeta, SingularBlock

TOL_BETA = 1e-9
TOL_DEFECT = 1e-8

SWAP = np.array([[0, 1], [1, 0]], dtype=complex)
SWAP.flags.writeable = False
G = np.diag([1.0, -1.0]).astype(complex)
G.flags.writeable = False
I2 = np.eye(2, dtype=complex)
I2.flags.writeable = False

Mat2 = np.ndarray


def as_mat2(M) -> np.ndarray:
    A = np.asarray(M, dtype=complex)
    if A.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def _check_finite(A):
    if not np.all(np.isfinite(A)):
        raise ArithmeticError("non-finite entries produced")
    return A


# --------------------------------------------------------------------------
# batched kernels


def _phi_sharp(M):
    a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    bi = 1.0 / b
    out = np.empty(np.shape(M), dtype=complex)
    out[..., 0, 0] = bi
    out[..., 0, 1] = -bi * a
    out[..., 1, 0] = d * bi
    out[..., 1, 1] = c - d * bi * a
    return out


def _phi_flat(M):
    a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    bi = 1.0 / b
    out = np.empty(np.shape(M), dtype=complex)
    out[..., 0, 0] = c - d * bi * a
    out[..., 0, 1] = d * bi
    out[..., 1, 0] = -bi * a
    out[..., 1, 1] = bi
    return out


def _det(T):
    return T[..., 0, 0] * T[..., 1, 1] - T[..., 0, 1] * T[..., 1, 0]


def _trace(T):
    return T[..., 0, 0] + T[..., 1, 1]


def _inv(T):
    det = _det(T)
    out = np.empty(np.shape(T), dtype=complex)
    out[..., 0, 0] = T[..., 1, 1] / det
    out[..., 0, 1] = -T[..., 0, 1] / det
    out[..., 1, 0] = -T[..., 1, 0] / det
    out[..., 1, 1] = T[..., 0, 0] / det
    return out


def _opnorm(T):
    """Largest singular value of each 2x2 matrix, in closed form."""
    # eigenvalues of the Gram matrix T*T; this form avoids cancellation when
    # the singular values are close
    c0 = np.abs(T[..., 0, 0]) ** 2 + np.abs(T[..., 1, 0]) ** 2
    c1 = np.abs(T[..., 0, 1]) ** 2 + np.abs(T[..., 1, 1]) ** 2
    g = np.conj(T[..., 0, 0]) * T[..., 0, 1] + np.conj(T[..., 1, 0]) * T[..., 1, 1]
    disc = np.sqrt((c0 - c1) ** 2 + 4.0 * np.abs(g) ** 2)
    return np.sqrt(0.5 * (c0 + c1 + disc))


def _u11_defect(T):
    T = np.asarray(T, dtype=complex)
    D = np.conj(np.swapaxes(T, -1, -2)) @ G @ T - G
    return np.sqrt(np.sum(np.abs(D) ** 2, axis=(-2, -1)))


# --------------------------------------------------------------------------
# checked single-matrix API


def phi_sharp(M, tol_beta: float = TOL_BETA) -> np.ndarray:
    """Rewire a scattering block into the transfer matrix acting on ``(psi_-, phi_-)``.

    Raises
    ------
    SingularBeta
        If ``|M[0, 1]| <= tol_beta``.
    """
    M = as_mat2(M)
    if abs(M[0, 1]) <= tol_beta:
        raise SingularBeta(f"|beta| = {abs(M[0, 1]):.3e} <= {tol_beta:.1e}")
    return _check_finite(_phi_sharp(M))


def phi_flat(M, tol_beta: float = TOL_BETA) -> np.ndarray:
    """Rewire a scattering block into the transfer matrix acting on ``(phi_-, psi_-)``."""
    M = as_mat2(M)
    if abs(M[0, 1]) <= tol_beta:
        raise SingularBeta(f"|beta| = {abs(M[0, 1]):.3e} <= {tol_beta:.1e}")
    return _check_finite(_phi_flat(M))


def phi_sharp_inv(T, tol: float = TOL_BETA) -> np.ndarray:
    """Inverse of :func:`phi_sharp`; needs the upper-left entry to be invertible."""
    T = as_mat2(T)
    A, B, C, D = T[0, 0], T[0, 1], T[1, 0], T[1, 1]
    if abs(A) <= tol:
        raise SingularBlock(f"|A| = {abs(A):.3e} <= {tol:.1e}")
    Ai = 1.0 / A
    return _check_finite(np.array([[-B * Ai, Ai], [D - C * Ai * B, C * Ai]]))


def phi_flat_inv(T, tol: float = TOL_BETA) -> np.ndarray:
    """Inverse of :func:`phi_flat`; needs the lower-right entry to be invertible."""
    T = as_mat2(T)
    A, B, C, D = T[0, 0], T[0, 1], T[1, 0], T[1, 1]
    if abs(D) <= tol:
        raise SingularBlock(f"|D| = {abs(D):.3e} <= {tol:.1e}")
    Di = 1.0 / D
    return _check_finite(np.array([[-C * Di, Di], [A - B * Di * C, B * Di]]))


def u11_defect(T) -> float:
    """Frobenius norm of ``T* G T - G``; zero exactly on U(1,1)."""
    return float(_u11_defect(as_mat2(T)))


def unitary_defect(M) -> float:
    """Frobenius norm of ``M* M - I`` for a square matrix."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return float(np.linalg.norm(M.conj().T @ M - np.eye(M.shape[0])))


def operator_norm(T) -> float:
    return float(_opnorm(as_mat2(T)))


@dataclass(frozen=True)
class U11Eigensystem:
    """Eigenstructure ``e^{i chi} lambda``, ``e^{i chi} / lambda`` of a U(1,1) matrix.

    ``chi`` lies in ``[0, pi)`` and ``|lambda| <= 1``.  When both candidates
    are unimodular the one with negative imaginary part is taken.
    ``eigvec_minus`` belongs to ``e^{i chi} lambda`` and ``eigvec_plus`` to
    ``e^{i chi} / lambda``; both are ``None`` when ``degenerate`` is set.
    """

    chi: float
    lam: complex
    eigvec_minus: np.ndarray | None
    eigvec_plus: np.ndarray | None
    degenerate: bool

    @property
    def eigenvalues(self):
        ph = np.exp(1j * self.chi)
        return ph * self.lam, ph / self.lam

    @property
    def half_trace(self) -> float:
        """The real number ``lambda + 1/lambda``."""
        return float((self.lam + 1.0 / self.lam).real)


def _normalize_vec(v):
    v = v / np.linalg.norm(v)
    k = 0 if abs(v[0]) > 1e-14 else 1
    return v * (abs(v[k]) / v[k])


def _eigvec(T, mu):
    a, b, c, d = T[0, 0], T[0, 1], T[1, 0], T[1, 1]
    v1 = np.array([b, mu - a])
    v2 = np.array([mu - d, c])
    v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
    if np.linalg.norm(v) == 0.0:
        # T is a multiple of the identity
        return np.array([1.0 + 0j, 0.0])
    return _normalize_vec(v)


def u11_eigensystem(T, tol: float = TOL_DEFECT) -> U11Eigensystem:
    """Decompose a U(1,1) matrix into phase ``e^{i chi}`` and ``lambda``.

    ``chi`` solves ``e^{2 i chi} = det T`` on the branch ``[0, pi)`` and
    ``lambda`` solves ``lambda + 1/lambda = Tr(T) e^{-i chi}``, which is real.

    Raises
    ------
    NotU11
        If ``u11_defect(T)`` exceeds ``tol`` times ``max(1, |T|^2)``.
    """
    T = as_mat2(T)
    scale = max(1.0, operator_norm(T) ** 2)
    defect = u11_defect(T)
    if defect > tol * scale:
        raise NotU11(f"u11 defect {defect:.3e} exceeds {tol:.1e}")
    chi = float(np.mod(np.angle(_det(T)), 2 * np.pi) / 2.0)
    if chi >= np.pi:
        chi -= np.pi
    s = (_trace(T) * np.exp(-1j * chi)).real
    if abs(s) < 2.0:
        lam = complex(s / 2.0, -np.sqrt(1.0 - s * s / 4.0))
    else:
        lam = complex((s - np.sign(s) * np.sqrt(s * s - 4.0)) / 2.0, 0.0)
    degenerate = abs(abs(s) - 2.0) <= tol * scale
    if degenerate:
        return U11Eigensystem(chi, complex(np.sign(s) or 1.0), None, None, True)
    ph = np.exp(1j * chi)
    return U11Eigensystem(
        chi, lam, _eigvec(T, ph * lam), _eigvec(T, ph / lam), False
    )


def haar_unitary(n: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Haar-distributed unitary ``n x n`` matrices via QR with phase fix."""
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    Z = (rng.standard_normal(shape + (n, n)) + 1j * rng.standard_normal(shape + (n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    return Q * (d / np.abs(d))[..., None, :]
