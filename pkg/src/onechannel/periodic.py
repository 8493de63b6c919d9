"""Periodic scattering zippers: monodromy, bands, band edges and eigenvalues.

A ``p``-periodic zipper has blocks ``V_n = V_{((n-1) mod p) + 1}`` and
``W_n = W_{((n-1) mod p) + 1}`` for ``n >= 1``.  ``V_0`` defaults to ``V_p``
but may be replaced to model a boundary defect.  The monodromy
``T_z = T_{z,p} ... T_{z,1}`` governs everything: on the unit circle the
bands are where ``D = (Tr T_z)^2 / det T_z < 4``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from .exceptions import EmptyBandSet, NearBandEdge, NonRealDiscriminant, NonUnitaryBlock
from .mat2core import _det, _inv, _trace, u11_eigensystem, unitary_defect
from .model import CHANNEL_ZERO, OneChannelModel, ZipperSpec, build_zipper, theta_block
from .transfer import _mul

_OFFSET = 0.5 * (np.sqrt(5.0) - 1.0)


def _sharp_parts(V):
    """``T^sharp(z) = [[p / z, q], [r, s z]]`` for a zipper block ``V``."""
    a, b, c, d = V[0, 0], V[0, 1], V[1, 0], V[1, 1]
    return c - d * a / b, d / b, -a / b, 1.0 / b


def _flat(W):
    a, b, c, d = W[0, 0], W[0, 1], W[1, 0], W[1, 1]
    return np.array([[c - d * a / b, d / b], [-a / b, 1.0 / b]], dtype=complex)


@dataclass(frozen=True, eq=False)
class PeriodicZipper:
    """Blocks ``V_1..V_p``, ``W_1..W_p`` of one period, plus ``V_0`` and ``u``."""

    V: tuple
    W: tuple
    V0: np.ndarray | None = None
    u: complex = 1.0

    def __post_init__(self):
        V = tuple(np.array(x, dtype=complex) for x in self.V)
        W = tuple(np.array(x, dtype=complex) for x in self.W)
        if not V or len(V) != len(W):
            raise ValueError("need equally many V and W blocks, at least one")
        V0 = V[-1] if self.V0 is None else np.array(self.V0, dtype=complex)
        for name, B in [("V0", V0)] + [(f"V{k + 1}", x) for k, x in enumerate(V)] + [
            (f"W{k + 1}", x) for k, x in enumerate(W)
        ]:
            if B.shape != (2, 2) or unitary_defect(B) > 1e-10:
                raise NonUnitaryBlock(f"{name} is not a 2x2 unitary")
            if abs(B[0, 1]) <= CHANNEL_ZERO:
                raise NonUnitaryBlock(f"{name} has a vanishing coupling entry")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "V0", V0)
        object.__setattr__(self, "u", complex(self.u))

    @property
    def period(self) -> int:
        return len(self.V)

    def V_at(self, n: int) -> np.ndarray:
        return self.V0 if n == 0 else self.V[(n - 1) % self.period]

    def W_at(self, n: int) -> np.ndarray:
        return self.W[(n - 1) % self.period]

    def to_model(self, N: int, u=None) -> OneChannelModel:
        """Truncation to shells ``0..N``."""
        spec = ZipperSpec(tuple(self.V_at(n) for n in range(N + 1)), tuple(self.W_at(n) for n in range(1, N + 1)))
        return build_zipper(spec, self.u if u is None else u)

    @property
    def epsilon0(self) -> float:
        """Smallest coupling entry ``|b|`` over all blocks."""
        blocks = (self.V0,) + self.V + self.W
        return float(min(abs(B[0, 1]) for B in blocks))

    def step_matrices(self, z, n: int):
        """``T_{z,n}`` and ``dT_{z,n}/d phi`` (at ``z = e^{i phi}``) for an array ``z``."""
        return step_matrices(self.V_at(n), None if n == 0 else self.W_at(n), z)


def step_matrices(V, W, z):
    """One-step transfer matrix of a zipper shell and its ``phi``-derivative."""
    z = np.asarray(z, dtype=complex)
    p, q, r, s = _sharp_parts(V)
    T = np.empty(z.shape + (2, 2), dtype=complex)
    T[..., 0, 0] = p / z
    T[..., 0, 1] = q
    T[..., 1, 0] = r
    T[..., 1, 1] = s * z
    # dz/dphi = i z
    dT = np.zeros_like(T)
    dT[..., 0, 0] = -1j * p / z
    dT[..., 1, 1] = 1j * s * z
    if W is not None:
        F = _flat(W)
        T = _mul(T, F)
        dT = _mul(dT, F)
    return T, dT


def theta_zipper(theta: float, u=1.0, V0=None) -> PeriodicZipper:
    """Period-one zipper with ``V = (cos t, sin t; sin t, -cos t)`` and ``W`` the swap."""
    SW = np.array([[0, 1], [1, 0]], dtype=complex)
    return PeriodicZipper((theta_block(theta),), (SW,), V0, u)


def monodromy(zipper: PeriodicZipper, z, derivative: bool = False):
    """``T_z = T_{z,p} ... T_{z,1}`` (vectorized over ``z``).

    With ``derivative`` also returns ``dT_z/d phi`` for ``z = e^{i phi}``.
    """
    z = np.asarray(z, dtype=complex)
    P = np.broadcast_to(np.eye(2, dtype=complex), z.shape + (2, 2)).copy()
    dP = np.zeros_like(P)
    for n in range(1, zipper.period + 1):
        T, dT = zipper.step_matrices(z, n)
        if derivative:
            dP = _mul(dT, P) + _mul(T, dP)
        P = _mul(T, P)
    return (P, dP) if derivative else P


def _disc(zipper, phi, derivative=False):
    z = np.exp(1j * np.asarray(phi, dtype=float))
    if derivative:
        T, dT = monodromy(zipper, z, derivative=True)
    else:
        T = monodromy(zipper, z)
    tr, det = _trace(T), _det(T)
    D = tr * tr / det
    if not derivative:
        return D, np.sum(np.abs(T) ** 2, axis=(-2, -1))
    dtr = _trace(dT)
    ddet = det * _trace(_mul(_inv(T), dT))
    dD = (2 * tr * dtr * det - tr * tr * ddet) / (det * det)
    return D, dD


def discriminant(zipper: PeriodicZipper, phi, check: bool = True):
    """``(Tr T_z)^2 / det T_z`` at ``z = e^{i phi}``; real on the circle.

    Raises
    ------
    NonRealDiscriminant
        If the imaginary part exceeds ``1e-9 * max(1, |T_z|_F^4)``, the
        size of its rounding error.
    """
    D, fro2 = _disc(zipper, phi)
    if check:
        bad = np.abs(D.imag) > 1e-9 * np.maximum(1.0, fro2 * fro2)
        if np.any(bad):
            raise NonRealDiscriminant(f"imaginary part {np.max(np.abs(D.imag)):.2e}")
    return D.real if np.ndim(D) else float(D.real)


def discriminant_derivative(zipper: PeriodicZipper, phi):
    return _disc(zipper, phi, derivative=True)[1].real


@dataclass
class BandSet:
    """Open arcs ``(start, end)`` with ``start < end``; an arc may extend past ``2 pi``.

    ``edges`` are the angles in ``[0, 2pi)`` where ``D = 4``; ``tangent_edges``
    the subset where ``D`` touches 4 without crossing.
    """

    arcs: list
    edges: np.ndarray
    tangent_edges: np.ndarray = field(default_factory=lambda: np.empty(0))
    point_spectrum: list = field(default_factory=list)
    grid_size: int = 0

    def contains(self, phi, closed: bool = True, margin: float = 0.0) -> np.ndarray:
        phi = np.mod(np.asarray(phi, dtype=float), 2 * np.pi)
        return self.distance(phi, closed) <= margin if closed else self._inside_open(phi)

    def _inside_open(self, phi):
        out = np.zeros(np.shape(phi), dtype=bool)
        for a, b in self.arcs:
            for shift in (0.0, 2 * np.pi):
                out |= (phi + shift > a) & (phi + shift < b)
        return out

    def distance(self, phi, closed: bool = True) -> np.ndarray:
        """Angular distance from ``phi`` to the closed arcs (0 inside)."""
        phi = np.mod(np.asarray(phi, dtype=float), 2 * np.pi)
        best = np.full(np.shape(phi), np.inf)
        inside = self._inside_open(phi)
        for a, b in self.arcs:
            for x in (a, b):
                best = np.minimum(best, np.abs(np.angle(np.exp(1j * (phi - x)))))
        return np.where(inside, 0.0, best)

    @property
    def total_length(self) -> float:
        return float(sum(b - a for a, b in self.arcs))

    @property
    def gaps(self) -> list:
        """Complementary closed intervals ``(start, end)``, possibly extending past ``2 pi``."""
        arcs = sorted(self.arcs)
        out = []
        for k, (a, b) in enumerate(arcs):
            nxt = arcs[(k + 1) % len(arcs)][0] + (2 * np.pi if k == len(arcs) - 1 else 0.0)
            if nxt - b > 1e-12:
                out.append((float(b), float(nxt)))
        return out


def _scan(zipper, G):
    phi = (np.arange(G) + _OFFSET) * (2 * np.pi / G)
    return phi, discriminant(zipper, phi) - 4.0


def _sign_changes(f):
    s = np.sign(f)
    return np.flatnonzero(s != np.roll(s, -1))


def band_set(
    zipper: PeriodicZipper,
    grid: int = 2048,
    tol: float = 1e-10,
    with_points: bool = True,
    max_grid: int = 1 << 20,
) -> BandSet:
    """Bands ``{D < 4}`` of a periodic zipper, their edges and (optionally) eigenvalues.

    Sign changes of ``D - 4`` on a uniform scan bracket the transversal
    edges; the grid doubles until the number of sign changes is the same for
    three consecutive sizes.  Grid maxima of ``D`` are refined on ``D'`` to
    catch edges where ``D`` only touches 4.

    Raises
    ------
    EmptyBandSet
        If no band is found (not possible for a valid zipper).
    """
    if grid < 256:
        raise ValueError("grid must be >= 256")
    G = int(grid)
    counts = []
    while True:
        phi, f = _scan(zipper, G)
        counts.append(len(_sign_changes(f)))
        if len(counts) >= 3 and counts[-1] == counts[-2] == counts[-3]:
            break
        if G >= max_grid:
            break
        G *= 2
    h = 2 * np.pi / G
    F = lambda x: discriminant(zipper, x, check=False) - 4.0
    edges = []
    for k in _sign_changes(f):
        lo = phi[k]
        hi = lo + h
        edges.append(brentq(F, lo, hi, xtol=min(tol, 1e-12), rtol=4 * np.finfo(float).eps) % (2 * np.pi))
    # tangential touches: local maxima of D near 4 from below
    touch = []
    is_max = (f >= np.roll(f, 1)) & (f >= np.roll(f, -1)) & (f < 0) & (f > -1e-2)
    dF = lambda x: float(discriminant_derivative(zipper, x))
    for k in np.flatnonzero(is_max):
        lo, hi = phi[k] - h, phi[k] + h
        a, b = dF(lo), dF(hi)
        if not (a > 0 > b):
            continue
        x = brentq(dF, lo, hi, xtol=min(tol, 1e-12), rtol=4 * np.finfo(float).eps)
        if F(x) > -1e-8:
            x = x % (2 * np.pi)
            if all(abs(np.angle(np.exp(1j * (x - e)))) > 1e-7 for e in edges):
                touch.append(x)
    all_edges = np.sort(np.array(edges + touch, dtype=float))
    arcs = _assemble_arcs(zipper, all_edges)
    if not arcs:
        raise EmptyBandSet("no band found; the zipper is probably invalid")
    out = BandSet(arcs, all_edges, np.sort(np.array(touch, dtype=float)), [], G)
    if with_points:
        out.point_spectrum = point_spectrum(zipper, zipper.u, grid, bands=out)
    return out


def _assemble_arcs(zipper, edges):
    if edges.size == 0:
        D = discriminant(zipper, np.array([_OFFSET]))[0]
        return [(0.0, 2 * np.pi)] if D < 4 else []
    arcs = []
    m = edges.size
    for k in range(m):
        a = edges[k]
        b = edges[(k + 1) % m] + (2 * np.pi if k == m - 1 else 0.0)
        if b - a <= 0:
            continue
        mid = 0.5 * (a + b)
        if discriminant(zipper, np.array([mid]))[0] < 4.0:
            arcs.append((float(a), float(b)))
    return sorted(arcs)


# --------------------------------------------------------------------------
# eigenvalues in gaps


def _contracting_eigvec(T):
    """Eigenvector of the eigenvalue ``e^{i chi} lambda`` with ``|lambda| < 1`` (vectorized)."""
    det = _det(T)
    chi = np.mod(np.angle(det), 2 * np.pi) / 2
    ph = np.exp(1j * chi)
    s = np.real(_trace(T) / ph)
    with np.errstate(invalid="ignore"):
        lam = (s - np.sign(s) * np.sqrt(np.maximum(s * s - 4, 0.0))) / 2
    mu = ph * lam
    a, b, c, d = T[..., 0, 0], T[..., 0, 1], T[..., 1, 0], T[..., 1, 1]
    v1 = np.stack([b, mu - a], axis=-1)
    v2 = np.stack([mu - d, c], axis=-1)
    use1 = np.linalg.norm(v1, axis=-1) >= np.linalg.norm(v2, axis=-1)
    v = np.where(use1[..., None], v1, v2)
    return v, np.abs(lam)


def _seed_vectors(zipper, z, u):
    T0, _ = zipper.step_matrices(z, 0)
    return np.stack([T0[..., 0, 0] * u + T0[..., 0, 1], T0[..., 1, 0] * u + T0[..., 1, 1]], axis=-1)


def _phase_mismatch(zipper, phi, u):
    """Sine of the phase of ``w_1 e_2 / (w_2 e_1)``, and ``|lambda|``.

    In a gap the seed ``w = T_{z,0} (u, 1)`` and the contracting eigenvector
    ``e`` are both null for ``diag(1, -1)``, so they are parallel exactly
    when that phase is zero.  The sine is used because it stays continuous
    where the seed passes close to the origin and its phase turns fast;
    zeros with phase ``pi`` are discarded later.
    """
    z = np.exp(1j * np.asarray(phi, dtype=float))
    T = monodromy(zipper, z)
    e, lam = _contracting_eigvec(T)
    w = _seed_vectors(zipper, z, u)
    ratio = w[..., 0] * e[..., 1] * np.conj(w[..., 1] * e[..., 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        return ratio.imag / np.abs(ratio), lam


def point_spectrum(zipper: PeriodicZipper, u=None, scan_grid: int = 2048, bands: BandSet | None = None) -> list:
    """Eigenvalues outside the closed bands as ``(angle, |lambda|)`` pairs.

    An eigenvalue occurs where ``T_{z,0} (u, 1)`` is the contracting
    eigenvector of the monodromy; the corresponding eigenfunction shrinks by
    ``|lambda|`` per period.  The scan grid doubles until the number of
    roots is stable.
    """
    u = zipper.u if u is None else complex(u)
    if bands is None:
        bands = band_set(zipper, max(scan_grid, 256), with_points=False)
    G = int(scan_grid)
    prev = None
    while True:
        roots = _point_scan(zipper, u, G, bands)
        if prev is not None and len(roots) == len(prev):
            return roots
        if G >= 1 << 18:
            return roots
        prev = roots
        G *= 2


def _point_scan(zipper, u, G, bands):
    # nodes in each gap include points 1e-9 inside both edges, so roots
    # closer to an edge than the grid step are still bracketed
    h = 2 * np.pi / G
    out = []
    f = lambda x: float(_phase_mismatch(zipper, np.array([x]), u)[0][0])
    for a, b in bands.gaps:
        lo, hi = a + 1e-9, b - 1e-9
        if hi <= lo:
            continue
        k = max(3, int(np.ceil((hi - lo) / h)) + 1)
        phi = np.linspace(lo, hi, k)
        g, _ = _phase_mismatch(zipper, phi, u)
        for i in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0):
            try:
                x = brentq(f, phi[i], phi[i + 1], xtol=1e-13)
            except ValueError:
                continue
            x = x % (2 * np.pi)
            if x > 2 * np.pi - 1e-12:
                x = 0.0
            T = monodromy(zipper, np.exp(1j * x))
            es = u11_eigensystem(T)
            if es.degenerate or abs(es.lam) >= 1 - 1e-6:
                continue
            w = _seed_vectors(zipper, np.exp(1j * x), u)
            e = es.eigvec_minus
            par = abs(w[0] * e[1] - w[1] * e[0]) / np.linalg.norm(w)
            if par < 1e-6:
                out.append((float(x), float(abs(es.lam))))
    return sorted(out)


class Diagonalization(NamedTuple):
    M: np.ndarray
    R: np.ndarray
    cond: float


def diagonalize_monodromy(zipper: PeriodicZipper, phi: float, margin: float = 1e-6) -> Diagonalization:
    """``M^{-1} T_z M = R`` with ``R`` diagonal unimodular, for ``z = e^{i phi}`` in a band.

    Columns of ``M`` are the unit eigenvectors for ``e^{i chi} lambda`` and
    ``e^{i chi} / lambda``.

    Raises
    ------
    NearBandEdge
        If ``D(phi) >= 4 - margin``.
    """
    D = discriminant(zipper, np.array([phi]))[0]
    if D >= 4 - margin:
        raise NearBandEdge(f"D({phi:.6g}) = {D:.10g} is not inside a band")
    T = monodromy(zipper, np.exp(1j * phi))
    es = u11_eigensystem(T)
    M = np.column_stack([es.eigvec_minus, es.eigvec_plus])
    Mi = np.linalg.inv(M)
    R = np.diag(np.diag(Mi @ T @ M))
    cond = float(np.linalg.norm(M, 2) * np.linalg.norm(Mi, 2))
    return Diagonalization(M, R, cond)


def truncation_eigenangles(zipper: PeriodicZipper, N: int, u=None, v=1.0) -> np.ndarray:
    """Eigenangles of the dense truncation to shells ``0..N``."""
    from .finite import assemble, eigensystem

    return eigensystem(assemble(zipper.to_model(N, u), N, u, v))[0]


def random_periodic_zipper(p: int, rng: np.random.Generator, min_coupling: float = 0.2, u=1.0) -> PeriodicZipper:
    """Zipper with Haar-random blocks of one period, coupling entries at least ``min_coupling``."""
    from .mat2core import haar_unitary

    def draw():
        while True:
            B = haar_unitary(2, rng)
            if abs(B[0, 1]) >= min_coupling:
                return B

    V = tuple(draw() for _ in range(p))
    W = tuple(draw() for _ in range(p))
    return PeriodicZipper(V, W, None, u)
