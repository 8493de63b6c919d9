"""One-channel unitary operators ``U = W V`` and builders for standard families.

A model is a finite list of shells ``0..N``.  Shell ``n`` carries a unitary
block ``V_n`` and two distinguished basis indices, the backward mode
``e_(n,-)`` and the forward mode ``e_(n,+)``.  Consecutive shells are coupled
only through the 2x2 unitary ``W_n`` acting on the pair
``(e_(n-1,+), e_(n,-))``; the left boundary is the phase ``u`` on ``e_(0,-)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .exceptions import (
    IndexOutOfRange,
    InvalidSiteChoice,
    NonUnitaryBlock,
    NonUnitaryCoin,
    ShapeMismatch,
)
from .mat2core import SWAP, unitary_defect

UNITARY_TOL = 1e-10
CHANNEL_ZERO = 1e-12

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def _unit_phase(u) -> complex:
    u = complex(u)
    if not np.isfinite(u) or abs(abs(u) - 1.0) > 1e-10:
        raise ValueError(f"boundary phase must be unimodular, got {u!r}")
    return u


@dataclass(frozen=True, eq=False)
class Shell:
    """One shell: its unitary block and the positions of the two channel modes."""

    V: np.ndarray
    index_minus: int = 0
    index_plus: int = -1

    def __post_init__(self):
        V = np.array(self.V, dtype=complex)
        if V.ndim != 2 or V.shape[0] != V.shape[1] or V.shape[0] < 2:
            raise ShapeMismatch(f"shell block must be square of size >= 2, got {V.shape}")
        n = V.shape[0]
        im, ip = int(self.index_minus), int(self.index_plus)
        if ip < 0:
            ip += n
        if not (0 <= im < n and 0 <= ip < n) or im == ip:
            raise ShapeMismatch(f"invalid channel indices ({self.index_minus}, {self.index_plus}) for size {n}")
        if unitary_defect(V) > UNITARY_TOL * max(1, n):
            raise NonUnitaryBlock(f"shell block not unitary (defect {unitary_defect(V):.2e})")
        V.flags.writeable = False
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "index_minus", im)
        object.__setattr__(self, "index_plus", ip)

    @property
    def size(self) -> int:
        return self.V.shape[0]

    @cached_property
    def interior(self) -> np.ndarray:
        """Indices of the orthogonal complement of the channel pair."""
        keep = np.ones(self.size, dtype=bool)
        keep[[self.index_minus, self.index_plus]] = False
        return np.flatnonzero(keep)

    def channel_coefficients(self, k_max: int) -> np.ndarray:
        """``e_+^* V^k e_-`` for ``k = 1..k_max``."""
        out = np.empty(k_max, dtype=complex)
        x = np.zeros(self.size, dtype=complex)
        x[self.index_minus] = 1.0
        for k in range(k_max):
            x = self.V @ x
            out[k] = x[self.index_plus]
        return out


def _check_w(W, n):
    W = np.array(W, dtype=complex)
    if W.shape != (2, 2):
        raise ShapeMismatch(f"W_{n} must be 2x2, got {W.shape}")
    if unitary_defect(W) > UNITARY_TOL:
        raise NonUnitaryBlock(f"W_{n} not unitary (defect {unitary_defect(W):.2e})")
    W.flags.writeable = False
    return W


@dataclass(frozen=True, eq=False)
class OneChannelModel:
    """Shells ``0..N`` with connections ``W_1..W_N`` and boundary phase ``u``.

    ``connections[k]`` is ``W_{k+1}``.  Use :meth:`W` for 1-based access.
    """

    shells: tuple
    connections: tuple
    u: complex = 1.0
    kind: str = "generic"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        shells = tuple(self.shells)
        for s in shells:
            if not isinstance(s, Shell):
                raise TypeError("shells must be Shell instances")
        conns = tuple(_check_w(W, k + 1) for k, W in enumerate(self.connections))
        if len(conns) != max(len(shells) - 1, 0):
            raise ShapeMismatch(
                f"{len(shells)} shells need {max(len(shells) - 1, 0)} connections, got {len(conns)}"
            )
        object.__setattr__(self, "shells", shells)
        object.__setattr__(self, "connections", conns)
        object.__setattr__(self, "u", _unit_phase(self.u))

    @property
    def n_shells(self) -> int:
        return len(self.shells)

    @property
    def N(self) -> int:
        """Highest shell index."""
        return len(self.shells) - 1

    def shell(self, n: int) -> Shell:
        if not 0 <= n < len(self.shells):
            raise IndexOutOfRange(f"shell {n} not in model with {len(self.shells)} shells")
        return self.shells[n]

    def W(self, n: int) -> np.ndarray:
        if not 1 <= n <= len(self.connections):
            raise IndexOutOfRange(f"connection W_{n} not in model")
        return self.connections[n - 1]

    def blocks(self) -> Iterator[tuple]:
        """Yield ``(n, shell, W_n)`` with ``W_0 = None``."""
        for n, s in enumerate(self.shells):
            yield n, s, (self.connections[n - 1] if n else None)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Row offset of each shell in the stacked basis, plus the total size."""
        return np.concatenate([[0], np.cumsum([s.size for s in self.shells])]).astype(int)

    def dim(self, N: int | None = None) -> int:
        N = self.N if N is None else N
        return int(self.offsets[N + 1])

    def truncate(self, N: int) -> "OneChannelModel":
        if not 0 <= N <= self.N:
            raise IndexOutOfRange(f"cannot truncate to level {N}")
        return OneChannelModel(self.shells[: N + 1], self.connections[:N], self.u, self.kind, dict(self.meta))

    def with_u(self, u) -> "OneChannelModel":
        return OneChannelModel(self.shells, self.connections, u, self.kind, dict(self.meta))

    @property
    def is_zipper(self) -> bool:
        return all(s.size == 2 for s in self.shells)

    @cached_property
    def _a1(self) -> tuple:
        return tuple(_a1_shell(s, s.size) for s in self.shells)

    @cached_property
    def _a2(self) -> tuple:
        return tuple(abs(W[0, 1]) > CHANNEL_ZERO for W in self.connections)

    def a1_failures(self) -> list:
        return [n for n, ok in enumerate(self._a1) if not ok]

    def a2_failures(self) -> list:
        return [n + 1 for n, ok in enumerate(self._a2) if not ok]

    @property
    def is_valid(self) -> bool:
        return all(self._a1) and all(self._a2)


def _a1_shell(shell: Shell, k_max: int) -> bool:
    return bool(np.any(np.abs(shell.channel_coefficients(k_max)) > CHANNEL_ZERO))


def validate_A1(model: OneChannelModel, n: int, k_max: int | None = None) -> bool:
    """Whether the two channel modes of shell ``n`` communicate through ``V_n``.

    True iff ``|e_+^* V_n^k e_-| > 1e-12`` for some ``1 <= k <= k_max``.
    ``k_max`` defaults to the shell size: the sequence lives in a Krylov
    space of at most that dimension, so a longer scan cannot find new
    nonzero terms.
    """
    s = model.shell(n)
    if k_max is None:
        return model._a1[n]
    return _a1_shell(s, max(int(k_max), 1))


def validate_A2(model: OneChannelModel, n: int) -> bool:
    """Whether the coupling entry ``b_n = W_n[0, 1]`` is nonzero."""
    model.W(n)  # range check
    return model._a2[n - 1]


# --------------------------------------------------------------------------
# builders


def _check_coin(C, size=None):
    C = np.asarray(C, dtype=complex)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or (size is not None and C.shape[0] != size):
        raise ShapeMismatch(f"coin has shape {C.shape}, expected ({size}, {size})")
    if unitary_defect(C) > UNITARY_TOL * max(1, C.shape[0]):
        raise NonUnitaryCoin(f"coin not unitary (defect {unitary_defect(C):.2e})")
    return C


def build_qw1d(coins: Sequence, u=1.0) -> OneChannelModel:
    """Half-line quantum walk ``U = S C`` on ``(n, up), (n, down)``.

    Spin up is the backward channel mode and spin down the forward one, so
    ``V_n = swap @ C_n`` and every ``W_n`` is the swap.
    """
    coins = [_check_coin(C, 2) for C in coins]
    shells = [Shell(SWAP @ C, 0, 1) for C in coins]
    conns = [SWAP] * max(len(shells) - 1, 0)
    return OneChannelModel(tuple(shells), tuple(conns), u, kind="qw1d", meta={"coins": coins})


def extract_coins(model: OneChannelModel) -> list:
    """Recover ``C_n = swap @ V_n`` from a quantum-walk model."""
    if not model.is_zipper:
        raise ShapeMismatch("coins can only be extracted from size-2 shells")
    return [SWAP @ s.V for s in model.shells]


def build_generalized_qw(shell_sizes: Sequence, up_down_indices: Sequence, coins: Sequence, u=1.0) -> OneChannelModel:
    """Quantum walk on shells of arbitrary size (e.g. a carbon chain).

    In shell ``n`` the orbitals ``up_down_indices[n] = (up, down)`` carry the
    walk; ``V_n = S_n C_n`` where ``S_n`` swaps those two orbitals.
    """
    if not (len(shell_sizes) == len(up_down_indices) == len(coins)):
        raise ShapeMismatch("shell_sizes, up_down_indices and coins must have equal length")
    shells = []
    for size, (up, down), C in zip(shell_sizes, up_down_indices, coins):
        size = int(size)
        if size < 2:
            raise ShapeMismatch(f"shell size {size} < 2")
        C = _check_coin(C, size)
        if up == down or not (0 <= up < size and 0 <= down < size):
            raise ShapeMismatch(f"invalid orbital pair ({up}, {down}) for size {size}")
        S = np.eye(size, dtype=complex)
        S[[up, down]] = S[[down, up]]
        shells.append(Shell(S @ C, up, down))
    conns = [SWAP] * max(len(shells) - 1, 0)
    return OneChannelModel(tuple(shells), tuple(conns), u, kind="carbon")


# ---- stroboscopic model on Z^2


def ring_sites(n: int) -> list:
    """Sites of shell ``n``: points at sup-distance ``n + 1/2`` from ``(-1/2, -1/2)``.

    Listed in clockwise order starting from the top-left corner ``(-n-1, n)``.
    """
    lo, hi = -n - 1, n
    top = [(x, hi) for x in range(lo, hi)]
    right = [(hi, y) for y in range(hi, lo, -1)]
    bottom = [(x, lo) for x in range(hi, lo, -1)]
    left = [(lo, y) for y in range(lo, hi)]
    return top + right + bottom + left


def ring_shift(n: int) -> np.ndarray:
    """Permutation matrix of the ring shift on shell ``n``.

    Even shells shift clockwise, odd shells counter-clockwise.
    """
    sites = ring_sites(n)
    pos = {s: i for i, s in enumerate(sites)}
    lo, hi = -n - 1, n
    m = len(sites)
    P = np.zeros((m, m), dtype=complex)
    for (x, y), i in pos.items():
        # clockwise image of (x, y)
        if x == hi and y > lo:
            img = (x, y - 1)
        elif y == lo and x > lo:
            img = (x - 1, y)
        elif x == lo and y < hi:
            img = (x, y + 1)
        else:
            img = (x + 1, y)
        P[pos[img], i] = 1.0
    return P if n % 2 == 0 else P.T.copy()


def default_stroboscopic_sites(n_max: int) -> tuple:
    """The standard choice of coupling sites along the horizontal axis.

    Returns ``(a, b)`` where ``a[n]`` for ``n = 1..n_max+1`` lies in shell
    ``n-1`` and ``b[n]`` for ``n = 0..n_max`` lies in shell ``n``.
    """
    a = {}
    b = {}
    for n in range(n_max + 2):
        if n % 2 == 0:
            b[n] = (-n - 1, 0)
            if n:
                a[n] = (-n, 0)
        else:
            b[n] = (n, 0)
            a[n] = (n - 1, 0)
    return a, {k: v for k, v in b.items() if k <= n_max}


def build_stroboscopic(n_max: int, W_seq: Sequence, ab_choice=None, u=1.0) -> OneChannelModel:
    """Ring-shift dynamics on Z^2 with shells coupled at single sites.

    Parameters
    ----------
    n_max : int
        Highest shell; shell ``n`` has ``4(2n+1)`` sites.
    W_seq : sequence of 2x2 unitaries
        ``W_1..W_{n_max}``; a shorter list is cycled.
    ab_choice : None or (a, b)
        Mappings ``a[n]`` (site in shell ``n-1``, for ``n = 1..n_max+1``) and
        ``b[n]`` (site in shell ``n``, for ``n = 0..n_max``).  ``None`` picks
        :func:`default_stroboscopic_sites`.
    """
    n_max = int(n_max)
    if n_max < 0:
        raise InvalidSiteChoice("n_max must be >= 0")
    a, b = default_stroboscopic_sites(n_max) if ab_choice is None else ab_choice
    W_seq = list(W_seq)
    if n_max > 0 and not W_seq:
        raise ShapeMismatch("need at least one connection matrix")
    shells = []
    for n in range(n_max + 1):
        sites = ring_sites(n)
        pos = {s: i for i, s in enumerate(sites)}
        try:
            bn, an1 = tuple(b[n]), tuple(a[n + 1])
        except KeyError as exc:
            raise InvalidSiteChoice(f"missing coupling site for shell {n}") from exc
        if bn not in pos:
            raise InvalidSiteChoice(f"b_{n}={bn} is not in shell {n}")
        if an1 not in pos:
            raise InvalidSiteChoice(f"a_{n + 1}={an1} is not in shell {n}")
        if an1 == bn:
            raise InvalidSiteChoice(f"a_{n + 1} coincides with b_{n}")
        if n >= 1:
            an = tuple(a[n])
            if max(abs(an[0] - bn[0]), abs(an[1] - bn[1])) != 1:
                raise InvalidSiteChoice(f"a_{n} and b_{n} are not neighbours")
        shells.append(Shell(ring_shift(n), pos[bn], pos[an1]))
    conns = [W_seq[k % len(W_seq)] for k in range(n_max)]
    return OneChannelModel(tuple(shells), tuple(conns), u, kind="stroboscopic")


# ---- scattering zippers


@dataclass(frozen=True)
class ZipperSpec:
    """Blocks of a scattering zipper: ``V_0..V_N`` and ``W_1..W_N``."""

    V: tuple
    W: tuple

    def __post_init__(self):
        V = tuple(np.asarray(x, dtype=complex) for x in self.V)
        W = tuple(np.asarray(x, dtype=complex) for x in self.W)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "W", W)


def build_zipper(spec: ZipperSpec, u=1.0) -> OneChannelModel:
    """Model with all shells of size two, so the channel modes span each shell."""
    for k, V in enumerate(spec.V):
        if V.shape != (2, 2) or unitary_defect(V) > UNITARY_TOL:
            raise NonUnitaryBlock(f"V_{k} is not a 2x2 unitary")
    for k, W in enumerate(spec.W):
        if W.shape != (2, 2) or unitary_defect(W) > UNITARY_TOL:
            raise NonUnitaryBlock(f"W_{k + 1} is not a 2x2 unitary")
    shells = tuple(Shell(V, 0, 1) for V in spec.V)
    return OneChannelModel(shells, spec.W, u, kind="zipper")


def theta_block(theta: float) -> np.ndarray:
    """Real reflection ``(cos t, sin t; sin t, -cos t)``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [s, -c]], dtype=complex)


def all_swap_model(N: int, u=1.0) -> OneChannelModel:
    """The free model: every ``V_n`` and ``W_n`` is the swap."""
    return build_zipper(ZipperSpec((SWAP,) * (N + 1), (SWAP,) * N), u)


def krylov_dimension(U: np.ndarray, v: np.ndarray, K: int, tol: float = 1e-9) -> int:
    """Rank of ``{U^k v : 0 <= k <= K}`` (numerical, via SVD)."""
    cols = [np.asarray(v, dtype=complex)]
    for _ in range(K):
        cols.append(U @ cols[-1])
    s = np.linalg.svd(np.column_stack(cols), compute_uv=False)
    return int(np.sum(s > tol * s[0]))


def random_model(rng: np.random.Generator, N: int, sizes: Sequence = (2, 3, 4), u=None) -> OneChannelModel:
    """Haar-random shells of mixed sizes and Haar-random connections.

    Channel indices are a random ordered pair of distinct orbitals; ``u`` is
    a random phase unless given.  Such models satisfy the channel assumptions
    almost surely.
    """
    from .mat2core import haar_unitary

    shells = []
    for _ in range(N + 1):
        k = int(rng.choice(sizes))
        i, j = rng.choice(k, size=2, replace=False)
        shells.append(Shell(haar_unitary(k, rng), int(i), int(j)))
    conns = tuple(haar_unitary(2, rng) for _ in range(N))
    if u is None:
        u = np.exp(2j * np.pi * rng.random())
    return OneChannelModel(tuple(shells), conns, u)
