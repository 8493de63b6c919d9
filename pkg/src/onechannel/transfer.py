"""Channel blocks and radial transfer matrices ``T_{z,[0,n]}``.

For shell ``n`` and spectral parameter ``z`` the channel block is the 2x2
matrix ``Q^*(z^{-1} V - P)^{-1} Q = z Q^*(V - z P)^{-1} Q`` relating the
channel values of a solution to those of ``Phi``.  Inside the closed unit
disk it is computed directly; outside, its inverse ``Q^*(z V^* - P)^{-1} Q``
is computed instead because that solve is the well-conditioned one there.

A level is *exceptional* at ``z`` when the upper-right entry of the block
vanishes, in which case the transfer matrix does not exist.  Such points
are reported, never continued through.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ExceptionalPoint, SingularBeta, SingularResolvent
from .mat2core import TOL_BETA, _det, _inv, _phi_flat, _phi_sharp, phi_flat
from .model import OneChannelModel, Shell

RESCALE_AT = 1e100
COND_LIMIT = 1e12
_CHUNK = 1 << 12


def _mul(A, B):
    """Batched 2x2 product with explicit entries (faster than matmul for tiny blocks)."""
    out = np.empty(np.broadcast_shapes(A.shape, B.shape), dtype=complex)
    a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    e, f, g, h = B[..., 0, 0], B[..., 0, 1], B[..., 1, 0], B[..., 1, 1]
    out[..., 0, 0] = a * e + b * g
    out[..., 0, 1] = a * f + b * h
    out[..., 1, 0] = c * e + d * g
    out[..., 1, 1] = c * f + d * h
    return out


def _channel_order(shell: Shell) -> np.ndarray:
    return np.array([shell.index_minus, shell.index_plus])


def _reduced_block(shell: Shell) -> np.ndarray:
    """``Q^* V Q`` for a shell without interior."""
    idx = _channel_order(shell)
    return shell.V[np.ix_(idx, idx)]


def _solve_stack(M, rhs):
    """Batched solve that tolerates individual singular systems (rows become NaN)."""
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        out = np.full(M.shape[:-1] + rhs.shape[-1:], np.nan, dtype=complex)
        for k in range(M.shape[0]):
            try:
                out[k] = np.linalg.solve(M[k], rhs[k] if rhs.ndim == 3 else rhs)
            except np.linalg.LinAlgError:
                pass
        return out


def _inner_blocks(shell: Shell, z):
    """``z Q^*(V - zP)^{-1} Q`` for a stack of ``z``."""
    m = shell.size
    idx = _channel_order(shell)
    Q = np.zeros((m, 2), dtype=complex)
    Q[idx, [0, 1]] = 1.0
    pdiag = np.ones(m)
    pdiag[idx] = 0.0
    out = np.empty((z.size, 2, 2), dtype=complex)
    for s in range(0, z.size, _CHUNK):
        zc = z[s : s + _CHUNK]
        M = shell.V[None, :, :] - zc[:, None, None] * np.diag(pdiag)[None]
        X = _solve_stack(M, np.broadcast_to(Q, (zc.size, m, 2)))
        out[s : s + _CHUNK] = zc[:, None, None] * X[:, idx, :]
    return out


def _outer_blocks(shell: Shell, z):
    """``Q^*(z V^* - P)^{-1} Q`` for a stack of ``z``."""
    m = shell.size
    idx = _channel_order(shell)
    Q = np.zeros((m, 2), dtype=complex)
    Q[idx, [0, 1]] = 1.0
    P = np.diag(np.where(np.isin(np.arange(m), idx), 0.0, 1.0))
    Vs = shell.V.conj().T
    out = np.empty((z.size, 2, 2), dtype=complex)
    for s in range(0, z.size, _CHUNK):
        zc = z[s : s + _CHUNK]
        M = zc[:, None, None] * Vs[None] - P[None]
        X = _solve_stack(M, np.broadcast_to(Q, (zc.size, m, 2)))
        out[s : s + _CHUNK] = X[:, idx, :]
    return out


def _fro(B):
    return np.sqrt(np.sum(np.abs(B) ** 2, axis=(-2, -1)))


def _beta_small(B, tol):
    b = np.abs(B[..., 0, 1])
    return ~np.isfinite(b) | ~np.isfinite(_fro(B)) | (b <= tol * _fro(B))


def shell_t_sharp(shell: Shell, z, tol_beta: float = TOL_BETA):
    """Vectorized ``T^sharp`` of one shell.

    Returns
    -------
    T : ndarray, shape ``z.shape + (2, 2)``
        Identity at exceptional points.
    bad : ndarray of bool
        Exceptional points, where the relevant block entry is below
        ``tol_beta`` relative to the block's Frobenius norm.
    """
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    z = z.ravel()
    T = np.empty((z.size, 2, 2), dtype=complex)
    bad = np.zeros(z.size, dtype=bool)
    with np.errstate(all="ignore"):
        if shell.size == 2:
            # P = 0: both branches reduce to phi_flat(z^{-1} Q^* V Q)
            Vq = _reduced_block(shell)
            if abs(Vq[0, 1]) <= tol_beta * np.linalg.norm(Vq):
                bad[:] = True
            else:
                a, b, c, d = Vq[0, 0], Vq[0, 1], Vq[1, 0], Vq[1, 1]
                T[:, 0, 0] = (c - d * a / b) / z
                T[:, 0, 1] = d / b
                T[:, 1, 0] = -a / b
                T[:, 1, 1] = z / b
        else:
            inside = np.abs(z) <= 1.0
            if inside.any():
                B = _inner_blocks(shell, z[inside])
                bad[inside] = _beta_small(B, tol_beta)
                T[inside] = _phi_sharp(B)
            if (~inside).any():
                B = _outer_blocks(shell, z[~inside])
                bad[~inside] = _beta_small(B, tol_beta)
                T[~inside] = _phi_flat(B)
        bad |= ~np.all(np.isfinite(T), axis=(-2, -1))
    T[bad] = np.eye(2)
    return T.reshape(shape + (2, 2)), bad.reshape(shape)


def _as_z(z) -> complex:
    z = complex(z)
    if z == 0 or not np.isfinite(z):
        raise ValueError(f"spectral parameter must be finite and nonzero, got {z!r}")
    return z


def _resolvent_matrix(shell: Shell, z: complex, outer: bool):
    pdiag = np.ones(shell.size)
    pdiag[_channel_order(shell)] = 0.0
    if outer:
        return z * shell.V.conj().T - np.diag(pdiag)
    return shell.V - z * np.diag(pdiag)


def _checked_block(shell: Shell, z: complex, outer: bool) -> np.ndarray:
    M = _resolvent_matrix(shell, z, outer)
    if np.linalg.cond(M) > COND_LIMIT:
        raise SingularResolvent(f"shell resolvent ill-conditioned at z={z!r}")
    zs = np.array([z])
    B = (_outer_blocks if outer else _inner_blocks)(shell, zs)[0]
    return B


def channel_block(model: OneChannelModel, n: int, z) -> np.ndarray:
    """The block ``(alpha, beta; gamma, delta) = Q_n^*(z^{-1} V_n - P_n)^{-1} Q_n``.

    For ``|z| > 1`` it is obtained as the inverse of ``Q_n^*(z V_n^* - P_n)^{-1} Q_n``.

    Raises
    ------
    SingularResolvent
        If the shell resolvent has condition number above ``1e12``.
    """
    z = _as_z(z)
    shell = model.shell(n)
    if abs(z) <= 1.0:
        return _checked_block(shell, z, outer=False)
    outer = _checked_block(shell, z, outer=True)
    if abs(_det(outer)) < 1e-300:
        raise SingularResolvent(f"outer block singular at z={z!r}")
    return _inv(outer)


def outer_block(model: OneChannelModel, n: int, z) -> np.ndarray:
    """``Q_n^*(z V_n^* - P_n)^{-1} Q_n``, the inverse of :func:`channel_block`."""
    z = _as_z(z)
    return _checked_block(model.shell(n), z, outer=True)


def t_sharp(model: OneChannelModel, n: int, z, tol_beta: float = TOL_BETA) -> np.ndarray:
    """In-shell transfer matrix mapping ``(Psi_-, Phi_-)`` to ``(Phi_+, Psi_+)``."""
    z = _as_z(z)
    T, bad = shell_t_sharp(model.shell(n), np.array([z]), tol_beta)
    if bad[0]:
        raise ExceptionalPoint(n, z)
    return T[0]


def t_flat(model: OneChannelModel, n: int, tol_beta: float = TOL_BETA) -> np.ndarray:
    """Connection transfer matrix ``phi_flat(W_n)``; identity for ``n = 0``."""
    if n == 0:
        model.shell(0)
        return np.eye(2, dtype=complex)
    try:
        return phi_flat(model.W(n), tol_beta)
    except SingularBeta:
        raise ExceptionalPoint(n) from None


def transfer_matrix(model: OneChannelModel, n: int, z, tol_beta: float = TOL_BETA) -> np.ndarray:
    """One-step matrix ``T_{z,n}`` mapping ``(Phi, Psi)`` at ``(n-1,+)`` to ``(n,+)``."""
    Ts = t_sharp(model, n, z, tol_beta)
    return Ts if n == 0 else Ts @ t_flat(model, n, tol_beta)


@dataclass
class TransferProduct:
    """``T_{z,[0,n]}``; ``matrix`` is ``None`` when ``exceptional`` is set.

    With ``log_scale != 0`` the true product is ``exp(log_scale) * matrix``.
    """

    z: complex
    n: int
    matrix: np.ndarray | None
    exceptional: bool = False
    boundary_mode: str = "none"
    log_scale: float = 0.0
    exceptional_level: int | None = None

    def apply(self, vec) -> np.ndarray:
        if self.matrix is None:
            raise ExceptionalPoint(self.exceptional_level, self.z)
        return np.exp(self.log_scale) * (self.matrix @ np.asarray(vec, dtype=complex))


def _flat_stack(model, N, tol_beta):
    flats = [None]
    for n in range(1, N + 1):
        try:
            flats.append(t_flat(model, n, tol_beta))
        except ExceptionalPoint:
            flats.append(None)
    return flats


def transfer_products(
    model: OneChannelModel,
    z,
    N: int | None = None,
    absorb_boundary: bool = False,
    rescale: bool = True,
    tol_beta: float = TOL_BETA,
):
    """Vectorized ``T_{z,[0,N]}`` over an array of spectral parameters.

    Returns
    -------
    mats : ndarray, shape ``z.shape + (2, 2)``
    log_scale : ndarray
        Natural-log scale factored out of each product (zero unless some
        partial product exceeded ``1e100`` in entry size and ``rescale`` is on).
    exceptional : ndarray of bool
    """
    N = model.N if N is None else int(N)
    model.shell(N)
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    zf = z.ravel()
    acc = np.broadcast_to(np.eye(2, dtype=complex), (zf.size, 2, 2)).copy()
    logs = np.zeros(zf.size)
    exc = np.zeros(zf.size, dtype=bool)
    flats = _flat_stack(model, N, tol_beta)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(N + 1):
            Ts, bad = shell_t_sharp(model.shell(n), zf, tol_beta)
            exc |= bad
            if n:
                if flats[n] is None:
                    exc[:] = True
                else:
                    Ts = _mul(Ts, flats[n])
            acc = _mul(Ts, acc)
            if rescale:
                big = np.max(np.abs(acc), axis=(-2, -1))
                hit = big > RESCALE_AT
                if hit.any():
                    acc[hit] /= big[hit, None, None]
                    logs[hit] += np.log(big[hit])
    if absorb_boundary:
        acc[:, :, 1] /= model.u
    acc[exc] = np.nan
    return acc.reshape(shape + (2, 2)), logs.reshape(shape), exc.reshape(shape)


def transfer_product(
    model: OneChannelModel,
    z,
    N: int | None = None,
    absorb_boundary: bool = False,
    rescale: bool = False,
    tol_beta: float = TOL_BETA,
) -> TransferProduct:
    """``T_{z,N} ... T_{z,0}``; an exceptional level sets the flag instead of raising.

    With ``absorb_boundary`` the product is right-multiplied by ``diag(1, 1/u)``.
    """
    z = _as_z(z)
    N = model.N if N is None else int(N)
    model.shell(N)
    acc = np.eye(2, dtype=complex)
    log_scale = 0.0
    mode = "absorbed-u" if absorb_boundary else "none"
    for n in range(N + 1):
        try:
            acc = transfer_matrix(model, n, z, tol_beta) @ acc
        except ExceptionalPoint:
            return TransferProduct(z, N, None, True, mode, 0.0, n)
        if rescale:
            big = np.max(np.abs(acc))
            if big > RESCALE_AT:
                acc = acc / big
                log_scale += float(np.log(big))
    if absorb_boundary:
        acc = acc @ np.diag([1.0, 1.0 / model.u])
    return TransferProduct(z, N, acc, False, mode, log_scale)


# --------------------------------------------------------------------------
# exceptional angles


@dataclass
class ExceptionalAngles:
    """Unit-circle angles where some level's transfer matrix is undefined.

    ``intervals`` holds ``(lo, hi)`` brackets of width at most ``1e-10`` around
    each located zero and ``levels`` the shell each came from.
    ``structural_levels`` lists shells whose block entry vanishes identically
    (a broken channel); those are not resolved into angles.
    """

    intervals: list = field(default_factory=list)
    levels: list = field(default_factory=list)
    structural_levels: list = field(default_factory=list)

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __getitem__(self, k):
        return self.intervals[k]

    @property
    def angles(self) -> np.ndarray:
        return np.array([(lo + hi) / 2 for lo, hi in self.intervals])

    def contains(self, phi, width: float = 0.0) -> np.ndarray:
        """Mask of ``phi`` values within ``width`` of an exceptional angle."""
        phi = np.asarray(phi, dtype=float)
        out = np.zeros(phi.shape, dtype=bool)
        for a in self.angles:
            d = np.abs(np.angle(np.exp(1j * (phi - a))))
            out |= d <= width
        return out


def _beta_on_circle(shell: Shell, phi):
    z = np.exp(1j * np.asarray(phi, dtype=float))
    with np.errstate(all="ignore"):
        B = _inner_blocks(shell, np.atleast_1d(z))
    return B[:, 0, 1], _fro(B)


def _refine_min(shell, lo, hi, width):
    """Shrink ``[lo, hi]`` around a local minimum of ``|beta|``.

    Uses bisection on the directional derivative ``Re(conj(d) beta)``,
    where ``d`` is the chord of ``beta`` across the bracket; at a simple
    zero this changes sign exactly at the zero.
    """
    b_lo, b_hi = _beta_on_circle(shell, [lo, hi])[0]
    d = b_hi - b_lo
    if d == 0:
        return lo, hi
    f = lambda x: float(np.real(np.conj(d) * _beta_on_circle(shell, [x])[0][0]))
    f_lo, f_hi = f(lo), f(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        return lo, hi
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if np.sign(fm) == np.sign(f_lo):
            lo, f_lo = mid, fm
        else:
            hi = mid
    return lo, hi


def exceptional_angles(
    model: OneChannelModel,
    N: int | None = None,
    grid_size: int = 4096,
    tol: float = 1e-7,
    width: float = 1e-10,
) -> ExceptionalAngles:
    """Locate angles ``phi`` where some ``beta_{e^{i phi}, n}``, ``n <= N``, vanishes.

    Candidates are local minima of ``|beta|`` on a uniform grid; each is
    refined to a bracket of ``width`` and accepted when ``|beta|`` there is
    below ``tol`` relative to the block norm.  Shells of size two cannot have
    such zeros unless their coupling entry vanishes identically.
    """
    if grid_size < 16:
        raise ValueError("grid_size must be >= 16")
    N = model.N if N is None else int(N)
    out = ExceptionalAngles()
    # irrational offset keeps grid nodes off special angles
    phi = (np.arange(grid_size) + 0.5 * (np.sqrt(5) - 1)) * (2 * np.pi / grid_size)
    h = 2 * np.pi / grid_size
    for n in range(N + 1):
        shell = model.shell(n)
        if not model._a1[n]:
            out.structural_levels.append(n)
            continue
        if n >= 1 and not model._a2[n - 1]:
            out.structural_levels.append(n)
            continue
        if shell.size == 2:
            continue
        beta, norm = _beta_on_circle(shell, phi)
        mag = np.where(np.isfinite(beta), np.abs(beta), 0.0)
        rel = mag / np.where(np.isfinite(norm) & (norm > 0), norm, 1.0)
        prev, nxt = np.roll(rel, 1), np.roll(rel, -1)
        cand = np.flatnonzero((rel <= prev) & (rel <= nxt) & (rel < 0.05))
        for k in cand:
            lo, hi = phi[k] - h, phi[k] + h
            lo, hi = _refine_min(shell, lo, hi, width)
            mid = 0.5 * (lo + hi)
            b, nb = _beta_on_circle(shell, [mid])
            if not np.isfinite(b[0]) or abs(b[0]) <= tol * nb[0]:
                lo, hi = lo % (2 * np.pi), lo % (2 * np.pi) + (hi - lo)
                out.intervals.append((lo, hi))
                out.levels.append(n)
    order = np.argsort([iv[0] for iv in out.intervals], kind="stable")
    out.intervals = [out.intervals[k] for k in order]
    out.levels = [out.levels[k] for k in order]
    return out


# --------------------------------------------------------------------------
# generalized eigenfunctions


def solution_samples(model: OneChannelModel, z, N: int | None = None, u=None) -> np.ndarray:
    """Channel values ``(Phi_(n,+), Psi_(n,+))`` for ``n = -1..N``.

    Row ``k`` corresponds to ``n = k - 1``; the first row is the boundary
    seed ``(u, 1)`` and row ``n + 1`` equals ``T_{z,[0,n]} (u, 1)``.
    """
    z = _as_z(z)
    N = model.N if N is None else int(N)
    u = model.u if u is None else complex(u)
    out = np.empty((N + 2, 2), dtype=complex)
    out[0] = (u, 1.0)
    x = out[0].copy()
    for n in range(N + 1):
        x = transfer_matrix(model, n, z) @ x
        out[n + 1] = x
    return out


def generalized_eigenfunction(model: OneChannelModel, z, N: int | None = None, u=None):
    """Full solution ``Psi`` on shells ``0..N`` together with ``Phi = V Psi / z``.

    ``Psi`` solves ``U Psi = z Psi`` for the half-infinite operator on every
    row of shells ``0..N`` except the forward mode of shell ``N``, which
    couples to the next shell.
    """
    z = _as_z(z)
    N = model.N if N is None else int(N)
    u = model.u if u is None else complex(u)
    samples = solution_samples(model, z, N, u)
    dim = model.dim(N)
    psi = np.zeros(dim, dtype=complex)
    phi = np.zeros(dim, dtype=complex)
    off = model.offsets
    for n in range(N + 1):
        shell = model.shell(n)
        prev_phi_plus, prev_psi_plus = samples[n]
        if n == 0:
            phi_minus = prev_psi_plus
        else:
            _, phi_minus = t_flat(model, n) @ np.array([prev_phi_plus, prev_psi_plus])
        phi_plus = samples[n + 1][0]
        rhs = np.zeros(shell.size, dtype=complex)
        rhs[shell.index_minus] = phi_minus
        rhs[shell.index_plus] = phi_plus
        M = _resolvent_matrix(shell, z, outer=False)  # V - zP
        psi_n = z * np.linalg.solve(M, rhs)
        s = slice(off[n], off[n + 1])
        psi[s] = psi_n
        phi[s] = shell.V @ psi_n / z
    return psi, phi
