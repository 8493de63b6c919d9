"""Random decaying perturbations of periodic scattering zippers.

Each block is multiplied on the right by ``exp(gamma_n A)`` with ``A`` a
random anti-Hermitian, traceless 2x2 generator of norm at most one and
``gamma_n = c (n + 1)^(-alpha)``.  Every block draws from its own
counter-based random stream keyed by ``(seed, realization, n, tag)``, so
blocks at different levels are independent by construction and any single
block can be regenerated without replaying the others.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import C3Violation, ConfigError
from .mat2core import _opnorm
from .model import OneChannelModel, ZipperSpec, build_zipper
from .periodic import PeriodicZipper, diagonalize_monodromy
from .spectrum import DensityGrid, carmona_density
from .transfer import _mul

TAG_V = 0
TAG_W = 1
MAX_RESAMPLE = 100

_SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


@dataclass(frozen=True)
class EnsembleConfig:
    """Perturbation law around a periodic base zipper.

    ``alpha > 1/2`` makes the perturbation square summable.  Set
    ``allow_nonsummable`` to run control experiments that violate this.
    """

    base: PeriodicZipper
    alpha: float = 1.0
    c: float = 0.1
    realizations: int = 100
    seed: int = 0
    n_max: int = 200
    allow_nonsummable: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.allow_nonsummable and not self.alpha > 0.5:
            raise ConfigError("(C2) requires alpha > 1/2")
        if self.c < 0 or not np.isfinite(self.c):
            raise ConfigError("amplitude c must be finite and >= 0")
        if self.realizations < 1 or self.n_max < 0:
            raise ConfigError("need realizations >= 1 and n_max >= 0")

    def gamma(self, n) -> np.ndarray:
        return self.c * (np.asarray(n, dtype=float) + 1.0) ** (-self.alpha)

    @property
    def epsilon0(self) -> float:
        return self.base.epsilon0

    @property
    def c3_guaranteed(self) -> bool:
        """Whether ``c <= eps0 / 2``, which makes resampling unnecessary."""
        return self.c <= 0.5 * self.epsilon0

    def describe(self) -> dict:
        return {
            "alpha": self.alpha,
            "c": self.c,
            "realizations": self.realizations,
            "seed": self.seed,
            "n_max": self.n_max,
            "period": self.base.period,
            "epsilon0": self.epsilon0,
            "allow_nonsummable": self.allow_nonsummable,
        }


def _key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)


def block_stream(seed: int, realization: int, n: int, tag: int, key=None) -> np.random.Generator:
    """Independent generator for one block: Philox with a per-block counter prefix."""
    key = _key(seed) if key is None else key
    counter = np.array([0, n, tag, realization], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def su2_exp(x, gamma) -> np.ndarray:
    """``exp(gamma * i (x . sigma) / sqrt(3))`` in closed form.

    With ``x`` in ``[-1, 1]^3`` the generator has norm ``|x| / sqrt(3) <= 1``.
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    t = gamma * r / np.sqrt(3.0)
    if r == 0.0:
        return np.eye(2, dtype=complex)
    nx = x / r
    H = np.tensordot(nx, _SIGMA, axes=1)
    return np.cos(t) * np.eye(2) + 1j * np.sin(t) * H


def _perturbed(B, gamma, gen, floor):
    for _ in range(MAX_RESAMPLE):
        x = 2.0 * gen.random(3) - 1.0
        Bh = B @ su2_exp(x, gamma)
        if abs(Bh[0, 1]) >= floor:
            return Bh
    raise C3Violation(f"coupling entry stayed below {floor:.3g} after {MAX_RESAMPLE} draws")


def sample_blocks(cfg: EnsembleConfig, realization: int, n_max: int | None = None):
    """Perturbed ``V_0..V_{n_max}`` and ``W_1..W_{n_max}`` for one realization."""
    n_max = cfg.n_max if n_max is None else int(n_max)
    key = _key(cfg.seed)
    floor = 0.5 * cfg.epsilon0
    V, W = [], []
    for n in range(n_max + 1):
        g = float(cfg.gamma(n))
        V.append(_perturbed(cfg.base.V_at(n), g, block_stream(cfg.seed, realization, n, TAG_V, key), floor))
        if n:
            W.append(_perturbed(cfg.base.W_at(n), g, block_stream(cfg.seed, realization, n, TAG_W, key), floor))
    return V, W


def sample_model(cfg: EnsembleConfig, realization: int, u=None, n_max: int | None = None) -> OneChannelModel:
    """One realization of the perturbed zipper, shells ``0..n_max``.

    Raises
    ------
    C3Violation
        If some coupling entry cannot be kept above ``eps0 / 2``.
    """
    V, W = sample_blocks(cfg, realization, n_max)
    return build_zipper(ZipperSpec(tuple(V), tuple(W)), cfg.base.u if u is None else u)


def _step(V, W, z):
    """Stacked one-step transfer matrices for stacked blocks ``V`` (and ``W``)."""
    a, b, c, d = V[:, 0, 0], V[:, 0, 1], V[:, 1, 0], V[:, 1, 1]
    T = np.empty(V.shape, dtype=complex)
    T[:, 0, 0] = (c - d * a / b) / z
    T[:, 0, 1] = d / b
    T[:, 1, 0] = -a / b
    T[:, 1, 1] = z / b
    if W is None:
        return T
    a, b, c, d = W[:, 0, 0], W[:, 0, 1], W[:, 1, 0], W[:, 1, 1]
    F = np.empty(W.shape, dtype=complex)
    F[:, 0, 0] = c - d * a / b
    F[:, 0, 1] = d / b
    F[:, 1, 0] = -a / b
    F[:, 1, 1] = 1.0 / b
    return _mul(T, F)


class MomentCurve(NamedTuple):
    n_periods: np.ndarray
    moment4: np.ndarray
    stderr: np.ndarray


def fourth_moment_curve(
    cfg: EnsembleConfig, phi: float, n_periods_list: Sequence[int], samples: int | None = None
) -> MomentCurve:
    """Monte-Carlo estimate of ``E |M^{-1} T_hat_{z,[0,np]} M|^4`` at ``z = e^{i phi}``.

    ``M`` diagonalizes the unperturbed monodromy.  Without perturbation the
    value is independent of ``n``; a bounded curve under perturbation is the
    signature of stable absolutely continuous spectrum.

    Raises
    ------
    NearBandEdge
        If ``phi`` is not strictly inside a band of the base zipper.
    """
    diag = diagonalize_monodromy(cfg.base, phi)
    M, Mi = diag.M, np.linalg.inv(diag.M)
    ns = np.array(sorted(set(int(k) for k in n_periods_list)))
    if ns.size == 0 or ns[0] < 0:
        raise ValueError("need non-negative period counts")
    S = cfg.realizations if samples is None else int(samples)
    p = cfg.base.period
    last = int(ns[-1]) * p
    z = np.exp(1j * phi)
    key = _key(cfg.seed)
    floor = 0.5 * cfg.epsilon0
    acc = np.broadcast_to(np.eye(2, dtype=complex), (S, 2, 2)).copy()
    values = {}
    want = {int(k) * p: int(k) for k in ns}
    for n in range(last + 1):
        g = float(cfg.gamma(n))
        Vb, Wb = cfg.base.V_at(n), (cfg.base.W_at(n) if n else None)
        V = np.empty((S, 2, 2), dtype=complex)
        W = np.empty((S, 2, 2), dtype=complex) if n else None
        for r in range(S):
            V[r] = _perturbed(Vb, g, block_stream(cfg.seed, r, n, TAG_V, key), floor) if g else Vb
            if n:
                W[r] = _perturbed(Wb, g, block_stream(cfg.seed, r, n, TAG_W, key), floor) if g else Wb
        acc = _mul(_step(V, W, z), acc)
        if n in want:
            X = Mi[None] @ acc @ M[None]
            values[want[n]] = _opnorm(X) ** 4
    mean = np.array([values[int(k)].mean() for k in ns])
    err = np.array([values[int(k)].std(ddof=1) / np.sqrt(S) if S > 1 else 0.0 for k in ns])
    return MomentCurve(ns, mean, err)


def perturbed_density(cfg: EnsembleConfig, realization: int, u=None, n: int | None = None, grid: int = 4096) -> DensityGrid:
    """Carmona density of one realization truncated at level ``n``."""
    n = cfg.n_max if n is None else int(n)
    model = sample_model(cfg, realization, u, n_max=n)
    return carmona_density(model, u, n, grid)


def moments_csv(curve: MomentCurve) -> str:
    lines = ["n,moment4,stderr"]
    for k, m, e in zip(curve.n_periods, curve.moment4, curve.stderr):
        lines.append(f"{int(k)},{format(float(m), '.17g')},{format(float(e), '.17g')}")
    return "\n".join(lines) + "\n"
