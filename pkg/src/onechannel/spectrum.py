"""Spectral densities on the unit circle computed from transfer products.

The main object is the density ``1 / (pi |T_{e^{i phi},[0,n]} (u, 1)|^2)``
with respect to ``d phi``.  Averaged over the right boundary phase it is
exactly the absolutely continuous part of the finite-volume spectral measure
at ``e_(0,-)``, and it converges weakly to the infinite-volume one.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .mat2core import _opnorm
from .model import OneChannelModel
from .transfer import exceptional_angles, transfer_products

DEFAULT_GRID = 4096


@dataclass
class DensityGrid:
    """Values of a density or Poisson transform on a uniform angle grid.

    ``values`` is NaN where ``mask`` is set (exceptional angles).  For
    ``kind == "carmona"`` the values are densities with respect to ``d phi``;
    for ``kind == "poisson"`` they are Poisson transforms ``P(r e^{i phi})``,
    whose density is ``P / (2 pi)``.
    """

    angles: np.ndarray
    values: np.ndarray
    n: int
    u: complex
    mask: np.ndarray
    kind: str = "carmona"
    r: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def step(self) -> float:
        return 2 * np.pi / self.angles.size

    def density(self) -> np.ndarray:
        """Density w.r.t. ``d phi`` regardless of ``kind``."""
        return self.values if self.kind == "carmona" else self.values / (2 * np.pi)

    def to_csv(self, fh=None) -> str:
        """CSV ``phi,density,masked``; masked rows have an empty density field."""
        buf = io.StringIO()
        buf.write("phi,density,masked\n")
        dens = self.density()
        for phi, val, m in zip(self.angles, dens, self.mask):
            sval = "" if m else format(float(val), ".17g")
            buf.write(f"{format(float(phi), '.17g')},{sval},{int(bool(m))}\n")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def uniform_grid(grid_size: int, shift: float = 0.0) -> np.ndarray:
    return (np.arange(grid_size) + shift) * (2 * np.pi / grid_size)


def _grid_for(model: OneChannelModel, n: int, grid_size: int):
    """Uniform grid, shifted by half a step if a node would hit an exceptional angle."""
    phi = uniform_grid(grid_size)
    exc = None
    if not model.is_zipper:
        exc = exceptional_angles(model, n, grid_size=max(grid_size, 256))
        if len(exc) and exc.contains(phi, width=1e-12).any():
            phi = uniform_grid(grid_size, 0.5)
    return phi, exc


def _norm2_applied(mats, logs, u, floor=True):
    w0 = mats[..., 0, 0] * u + mats[..., 0, 1]
    w1 = mats[..., 1, 0] * u + mats[..., 1, 1]
    nrm2 = np.abs(w0) ** 2 + np.abs(w1) ** 2
    if not floor:
        return nrm2, logs
    # When (u, 1) sits on the contracting direction the sum above cancels.
    # On |z| = 1 every factor has |det| = 1, so sigma_min = exp(-2 logs) / |mats|
    # and sigma_min^2 |(u, 1)|^2 is a floor that is exact in that case.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        low = (np.exp(-2.0 * logs) / _opnorm(mats)) ** 2 * (abs(u) ** 2 + 1)
    return np.fmax(nrm2, low), logs


def carmona_density(model: OneChannelModel, u=None, n: int | None = None, grid_size: int = DEFAULT_GRID) -> DensityGrid:
    """Density ``1 / (pi |T_{e^{i phi},[0,n]} (u, 1)|^2)`` on a uniform grid.

    Grid points where some transfer matrix is undefined are masked.
    """
    n = model.N if n is None else int(n)
    u = model.u if u is None else complex(u)
    phi, _ = _grid_for(model, n, grid_size)
    mats, logs, exc = transfer_products(model, np.exp(1j * phi), n)
    nrm2, logs = _norm2_applied(mats, logs, u)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        vals = np.exp(-2.0 * logs) / (np.pi * nrm2)
    vals[exc] = np.nan
    return DensityGrid(phi, vals, n, u, exc.copy(), "carmona")


def density_at(model: OneChannelModel, phi, u=None, n: int | None = None) -> np.ndarray:
    """The same density at arbitrary angles (NaN at exceptional ones), e.g. for adaptive quadrature."""
    n = model.N if n is None else int(n)
    u = model.u if u is None else complex(u)
    phi = np.asarray(phi, dtype=float)
    mats, logs, exc = transfer_products(model, np.exp(1j * phi), n)
    nrm2, logs = _norm2_applied(mats, logs, u)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        vals = np.exp(-2.0 * logs) / (np.pi * nrm2)
    return np.where(exc, np.nan, vals)


def density_mass(grid: DensityGrid) -> float:
    """Periodic trapezoid integral of the density, masked points counted as zero."""
    d = np.where(grid.mask, 0.0, grid.density())
    return float(np.sum(d) * grid.step)


def ls_integral(
    model: OneChannelModel, p: float, phi0: float, phi1: float, n: int | None = None, grid_size: int = 1024
) -> float:
    """Trapezoid value of the integral of ``|T_{e^{i phi},[0,n]}|^{2p}`` over ``[phi0, phi1]``.

    The norm is the largest singular value.  Exceptional nodes are dropped.
    """
    if p <= 1:
        raise ValueError("p must be > 1")
    if not phi0 < phi1:
        raise ValueError("need phi0 < phi1")
    n = model.N if n is None else int(n)
    phi = np.linspace(phi0, phi1, grid_size + 1)
    mats, logs, exc = transfer_products(model, np.exp(1j * phi), n)
    with np.errstate(over="ignore", invalid="ignore"):
        f = np.exp(2 * p * (np.log(_opnorm(mats)) + logs))
    f[exc] = 0.0
    return float(np.trapezoid(f, phi))


def density_floor_bound(model: OneChannelModel, u=None, n: int | None = None, grid=DEFAULT_GRID) -> float:
    """Largest violation of ``1 / |T (u, 1)|^2 <= |T|^2`` over a grid (0 if none).

    ``grid`` is either a grid size or an array of angles.
    """
    n = model.N if n is None else int(n)
    u = model.u if u is None else complex(u)
    phi = uniform_grid(grid) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    mats, logs, exc = transfer_products(model, np.exp(1j * phi), n)
    nrm2, _ = _norm2_applied(mats, logs, u, floor=False)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        lhs = np.exp(-2 * logs) / nrm2
        rhs = np.exp(2 * logs) * _opnorm(mats) ** 2
    gap = np.where(exc, -np.inf, lhs - rhs)
    return float(max(0.0, np.max(gap))) if gap.size else 0.0


def poisson_values(model: OneChannelModel, u, n: int, r: float, phi) -> np.ndarray:
    """``(|A|^2 - |B|^2) / |A u + B|^2`` at ``z = r e^{i phi}`` from ``T_{z,[0,n]}``."""
    mats, logs, exc = transfer_products(model, r * np.exp(1j * np.asarray(phi)), n)
    A, B = mats[..., 0, 0], mats[..., 0, 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = (np.abs(A) ** 2 - np.abs(B) ** 2) / np.abs(A * u + B) ** 2
    vals[exc] = np.nan
    return vals


def poisson_transform(
    model: OneChannelModel,
    u=None,
    n: int | None = None,
    r: float = 0.99,
    grid=DEFAULT_GRID,
    method: str = "transfer",
    n_v: int = 64,
) -> DensityGrid:
    """Poisson transform ``P(r e^{i phi})`` of the ``v``-averaged spectral measure.

    Methods
    -------
    ``"transfer"``
        ``(|A|^2 - |B|^2) / |A u + B|^2`` with ``(A, B)`` the top row of
        ``T_{z,[0,n]}``.
    ``"green"``
        ``1 + 2 Re g`` with ``g = -B / (A u + B)``; same input, other formula.
    ``"finite"``
        Dense eigendecomposition of ``U_n^{(u,1)}``, averaged exactly over
        the right boundary phase through a rank-one update and smoothed with
        the Poisson kernel.  Independent of transfer matrices.
    """
    if not 0 < r < 1:
        raise ValueError("need 0 < r < 1")
    n = model.N if n is None else int(n)
    u = model.u if u is None else complex(u)
    phi = uniform_grid(grid) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    if method == "transfer":
        vals = poisson_values(model, u, n, r, phi)
    elif method == "green":
        mats, _, exc = transfer_products(model, r * np.exp(1j * phi), n)
        A, B = mats[..., 0, 0], mats[..., 0, 1]
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = 1.0 + 2.0 * np.real(-B / (A * u + B))
        vals[exc] = np.nan
    elif method == "finite":
        from .finite import averaged_smoothed_density

        vals = 2 * np.pi * averaged_smoothed_density(model, n, u, r, phi, n_v=n_v)
    else:
        raise ValueError(f"unknown method {method!r}")
    mask = ~np.isfinite(vals)
    return DensityGrid(phi, vals, n, u, mask, "poisson", r)


def l1_distance(a: np.ndarray, b: np.ndarray, step: float) -> float:
    """``(1 / 2pi) * integral |a - b| d phi`` on a periodic uniform grid."""
    return float(np.nansum(np.abs(a - b)) * step / (2 * np.pi))
