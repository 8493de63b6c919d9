"""Dense finite-volume operators ``U_N^{(u,v)}`` and their resolvents.

This module deliberately avoids transfer matrices: it builds the full
``|G_N| x |G_N|`` unitary and works with dense solves and eigensolves, so it
can serve as an independent check of everything computed from 2x2 products.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import EigensolverFailure, ExceptionalPoint, IndexOutOfRange, SingularResolvent
from .mat2core import phi_sharp
from .model import OneChannelModel
from .transfer import transfer_product

MAX_DIM = 4096
COND_LIMIT = 1e12

_UPPER = np.array([[1, 1], [0, 1]], dtype=complex)
_LOWER_NEG = np.array([[1, 0], [-1, 1]], dtype=complex)


@dataclass(frozen=True, eq=False)
class FiniteOperator:
    """The restriction ``U_N^{(u,v)} = W_N^{(u,v)} V_N`` (or ``V_N W_N^{(u,v)}`` if ``tilde``)."""

    N: int
    u: complex
    v: complex
    matrix: np.ndarray
    offsets: np.ndarray
    row_minus0: int
    row_plusN: int
    tilde: bool = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def shell_rows(self, n: int) -> slice:
        return slice(int(self.offsets[n]), int(self.offsets[n + 1]))


def _blocks(model: OneChannelModel, N: int, u, v):
    off = model.offsets[: N + 2]
    dim = int(off[-1])
    Vm = np.zeros((dim, dim), dtype=complex)
    Wm = np.eye(dim, dtype=complex)
    for n in range(N + 1):
        s = model.shell(n)
        Vm[off[n] : off[n + 1], off[n] : off[n + 1]] = s.V
    m0 = int(off[0] + model.shell(0).index_minus)
    pN = int(off[N] + model.shell(N).index_plus)
    Wm[m0, m0] = u
    for n in range(1, N + 1):
        W = model.W(n)
        p = int(off[n - 1] + model.shell(n - 1).index_plus)
        m = int(off[n] + model.shell(n).index_minus)
        Wm[np.ix_([p, m], [p, m])] = W
    Wm[pN, pN] = v
    return Vm, Wm, off, m0, pN


def assemble(model: OneChannelModel, N: int | None = None, u=None, v=1.0, tilde: bool = False) -> FiniteOperator:
    """Dense matrix of the operator restricted to shells ``0..N``.

    ``u`` and ``v`` are the phases placed on ``e_(0,-)`` and ``e_(N,+)``;
    ``u`` defaults to the model's boundary phase.
    """
    N = model.N if N is None else int(N)
    if not 0 <= N <= model.N:
        raise IndexOutOfRange(f"level {N} outside model with {model.n_shells} shells")
    if model.dim(N) > MAX_DIM:
        raise ValueError(f"dimension {model.dim(N)} exceeds dense limit {MAX_DIM}")
    u = model.u if u is None else complex(u)
    Vm, Wm, off, m0, pN = _blocks(model, N, u, complex(v))
    U = Vm @ Wm if tilde else Wm @ Vm
    return FiniteOperator(N, u, complex(v), U, off, m0, pN, tilde)


def connection_matrix(model: OneChannelModel, N: int | None = None, u=None, v=1.0) -> np.ndarray:
    """Dense ``W_N^{(u,v)}``."""
    N = model.N if N is None else int(N)
    u = model.u if u is None else complex(u)
    return _blocks(model, N, u, complex(v))[1]


def _resolvent_solve(U: np.ndarray, z: complex, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(z^{-1} U - I) x = rhs`` with a conditioning check."""
    z = complex(z)
    if z == 0:
        raise SingularResolvent("z = 0")
    M = U / z - np.eye(U.shape[0])
    lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.min() == 0.0 or d.max() / d.min() > COND_LIMIT:
        # cheap pivot-ratio screen, confirmed with a real condition estimate
        if d.min() == 0.0 or np.linalg.cond(M) > COND_LIMIT:
            raise SingularResolvent(f"resolvent ill-conditioned at z={z!r}")
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def green(op: FiniteOperator, z) -> complex:
    """``e_(0,-)^* (z^{-1} U_N - I)^{-1} e_(0,-)`` by a dense solve."""
    e = np.zeros(op.dim, dtype=complex)
    e[op.row_minus0] = 1.0
    return complex(_resolvent_solve(op.matrix, z, e)[op.row_minus0])


def boundary_resolvent(model: OneChannelModel, N: int | None, u, v, z, tilde: bool = False) -> np.ndarray:
    """2x2 compression of ``(z^{-1} U_N - I)^{-1}`` onto ``(e_(0,-), e_(N,+))``."""
    op = assemble(model, N, u, v, tilde)
    return _boundary_block(op, z)


def _boundary_block(op: FiniteOperator, z) -> np.ndarray:
    rows = [op.row_minus0, op.row_plusN]
    E = np.zeros((op.dim, 2), dtype=complex)
    E[rows, [0, 1]] = 1.0
    X = _resolvent_solve(op.matrix, z, E)
    return X[rows, :]


def transfer_from_resolvent(model: OneChannelModel, N: int | None, z, tilde: bool = False) -> np.ndarray:
    """``T_{z,[0,N]}`` reconstructed from the boundary resolvent with ``u = v = 1``."""
    R = boundary_resolvent(model, N, 1.0, 1.0, z, tilde)
    return _UPPER @ phi_sharp(R) @ _LOWER_NEG


def transfer_from_grouped_resolvent(model: OneChannelModel, N: int | None, z) -> np.ndarray:
    """``T_{z,[0,N]}`` as ``phi_sharp`` of the compression of ``(z^{-1} U_N - P_{0,N})^{-1}``.

    Treats shells ``0..N`` as one big shell; ``P_{0,N}`` projects away from
    the two boundary modes.
    """
    op = assemble(model, N, 1.0, 1.0)
    rows = [op.row_minus0, op.row_plusN]
    P = np.eye(op.dim, dtype=complex)
    P[rows, rows] = 0.0
    E = np.zeros((op.dim, 2), dtype=complex)
    E[rows, [0, 1]] = 1.0
    X = np.linalg.solve(op.matrix / complex(z) - P, E)
    return phi_sharp(X[rows, :])


def averaged_green(model: OneChannelModel, N: int | None, u, z) -> complex:
    """Green value averaged over the right boundary phase, ``-B/(A u + B)``.

    ``(A, B)`` is the top row of ``T_{z,[0,N]}``.  Valid for ``|z| < 1``.

    Raises
    ------
    ExceptionalPoint
        If the transfer product does not exist at ``z``.
    """
    tp = transfer_product(model, z, N)
    if tp.exceptional:
        raise ExceptionalPoint(tp.exceptional_level, complex(z))
    A, B = tp.matrix[0]
    u = complex(u)
    return complex(-B / (A * u + B))


def averaged_green_quadrature(
    model: OneChannelModel, N: int | None, u, z, n_v: int = 512, tol: float = 1e-9, max_n_v: int = 1 << 14
) -> complex:
    """Trapezoid average of ``g^{(u, v)}`` over ``n_v`` equispaced boundary phases ``v``.

    ``n_v`` doubles until two successive averages differ by less than ``tol``;
    each doubling only evaluates the new midpoints.
    """
    N = model.N if N is None else int(N)
    base = assemble(model, N, u, 1.0)
    Vm, Wm, off, m0, pN = _blocks(model, N, complex(u), 1.0)
    e = np.zeros(base.dim, dtype=complex)
    e[m0] = 1.0

    def mean_over(vs):
        total = 0.0j
        for v in vs:
            Wv = Wm.copy()
            Wv[pN, pN] = v
            total += _resolvent_solve(Wv @ Vm, z, e)[m0]
        return total / len(vs)

    def phases(k):
        return np.exp(2j * np.pi * np.arange(k) / k)

    prev = mean_over(phases(n_v))
    while n_v < max_n_v:
        n_v *= 2
        # only the new odd-indexed nodes need evaluating
        odd = np.exp(2j * np.pi * (np.arange(n_v // 2) * 2 + 1) / n_v)
        cur = 0.5 * prev + 0.5 * mean_over(odd)
        if abs(cur - prev) < tol:
            return complex(cur)
        prev = cur
    return complex(prev)


def spectral_measure(op: FiniteOperator, tol: float | None = None):
    """Eigenangles in ``[0, 2pi)`` and weights ``|<e_(0,-), psi_j>|^2``.

    Uses a complex Schur decomposition; for a unitary matrix the triangular
    factor is diagonal, and its off-diagonal residue is checked.

    Raises
    ------
    EigensolverFailure
        If the Schur factor is not numerically diagonal or weights do not sum to one.
    """
    tol = 1e-9 * max(op.dim, 1) if tol is None else tol
    try:
        T, Z = scipy.linalg.schur(op.matrix, output="complex")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverFailure(str(exc)) from exc
    off = np.linalg.norm(np.triu(T, 1))
    if off > tol:
        raise EigensolverFailure(f"Schur factor not diagonal (residue {off:.2e})")
    ev = np.diag(T)
    angles = np.mod(np.angle(ev), 2 * np.pi)
    weights = np.abs(Z[op.row_minus0, :]) ** 2
    if abs(weights.sum() - 1.0) > 1e-10 * max(1, op.dim):
        raise EigensolverFailure("spectral weights do not sum to one")
    order = np.argsort(angles, kind="stable")
    return angles[order], weights[order]


def eigensystem(op: FiniteOperator):
    """Eigenangles and orthonormal eigenvectors (columns) of a finite operator."""
    T, Z = scipy.linalg.schur(op.matrix, output="complex")
    angles = np.mod(np.angle(np.diag(T)), 2 * np.pi)
    order = np.argsort(angles, kind="stable")
    return angles[order], Z[:, order]


def poisson_kernel(r: float, dphi) -> np.ndarray:
    """``(1 - r^2) / (1 - 2 r cos(dphi) + r^2)``."""
    return (1.0 - r * r) / (1.0 - 2.0 * r * np.cos(dphi) + r * r)


def smoothed_density(angles, weights, r: float, phi) -> np.ndarray:
    """Poisson smoothing of a point measure, as a density with respect to ``dphi``."""
    phi = np.asarray(phi, dtype=float)
    K = poisson_kernel(r, phi[:, None] - np.asarray(angles)[None, :])
    return K @ np.asarray(weights) / (2 * np.pi)


def _rank_one_average(model: OneChannelModel, N: int, u, r: float, phi) -> np.ndarray:
    # U_v = (I + (v - 1) e_b e_b^*) U_1, so one eigensystem of U_1 gives every
    # v through Sherman-Morrison.  The v-dependence is a Moebius map whose
    # circle mean is a point value.
    op = assemble(model, N, u, 1.0)
    angles, Z = eigensystem(op)
    a, b = op.row_minus0, op.row_plusN
    w = r * np.exp(1j * np.asarray(phi, dtype=float))
    C = 1.0 / (np.exp(1j * angles)[None, :] - w[:, None])
    za, zb = Z[a], Z[b]
    r_aa = C @ (np.abs(za) ** 2)
    r_ab = C @ (za * np.conj(zb))
    r_ba = C @ (zb * np.conj(za))
    r_bb = C @ (np.abs(zb) ** 2)
    p = float(a == b) + w * r_ba
    q = 1.0 + w * r_bb
    # mean over |v| = 1 of (v - 1) / ((1 - q) + q v)
    mean_f = np.where(np.abs(1.0 - q) > np.abs(q), -1.0 / (1.0 - q), 1.0 / q)
    g = r_aa - r_ab * p * mean_f
    return np.real(1.0 + 2.0 * w * g) / (2 * np.pi)


def averaged_smoothed_density(
    model: OneChannelModel,
    N: int | None,
    u,
    r: float,
    phi,
    n_v: int = 64,
    tol: float = 1e-9,
    max_n_v: int = 1024,
    method: str = "rank-one",
) -> np.ndarray:
    """Poisson-smoothed spectral density at ``e_(0,-)`` averaged over ``v``.

    ``method="rank-one"`` diagonalizes ``U_N^{(u,1)}`` once and averages over
    ``v`` exactly.  ``method="quadrature"`` diagonalizes at ``n_v`` equispaced
    phases and doubles until the sup-change falls below ``tol`` (relative to
    the maximum); it gets slow as ``r -> 1``.
    """
    N = model.N if N is None else int(N)
    if method == "rank-one":
        return _rank_one_average(model, N, u, r, phi)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")

    def curve(vs):
        acc = np.zeros(np.size(phi))
        for v in vs:
            a, w = spectral_measure(assemble(model, N, u, v))
            acc += smoothed_density(a, w, r, phi)
        return acc / len(vs)

    prev = curve(np.exp(2j * np.pi * np.arange(n_v) / n_v))
    while n_v < max_n_v:
        odd = np.exp(2j * np.pi * (2 * np.arange(n_v) + 1) / (2 * n_v))
        cur = 0.5 * prev + 0.5 * curve(odd)
        n_v *= 2
        if np.max(np.abs(cur - prev)) < tol * max(np.max(np.abs(cur)), 1.0):
            return cur
        prev = cur
    return prev
