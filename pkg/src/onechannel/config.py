"""JSON model configurations.

Schema::

    {"type": "qw1d" | "zipper" | "carbon" | "stroboscopic",
     "u": [re, im],            # optional, default [1, 0]
     "period": int,            # optional, defaults to len(blocks)
     "blocks": [...],          # see below; omit for random blocks from "seed"
     "n_shells": int,
     "seed": int}              # optional

Complex scalars are ``[re, im]`` pairs (plain reals are accepted too) and
matrices are row lists of such scalars.  Block lists by type:

* ``qw1d``: 2x2 coins, cycled over the shells.
* ``zipper``: objects ``{"V": M, "W": M}`` for one period, plus an optional
  top-level ``"V0"`` matrix for shell 0 (default: the last ``V``).
* ``carbon``: objects ``{"size": k, "up_down": [i, j], "coin": M}``, cycled.
* ``stroboscopic``: 2x2 connection matrices ``W``, cycled.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, OneChannelError
from .mat2core import SWAP, haar_unitary
from .model import (
    OneChannelModel,
    ZipperSpec,
    build_generalized_qw,
    build_qw1d,
    build_stroboscopic,
    build_zipper,
)

TYPES = ("qw1d", "zipper", "carbon", "stroboscopic")
_KEYS = {"type", "u", "period", "blocks", "n_shells", "seed", "V0", "name"}


def parse_complex(x) -> complex:
    if isinstance(x, bool):
        raise ConfigError(f"not a number: {x!r}")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(
        isinstance(t, (int, float)) and not isinstance(t, bool) for t in x
    ):
        return complex(x[0], x[1])
    raise ConfigError(f"expected a number or [re, im], got {x!r}")


def parse_matrix(rows, shape=None) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ConfigError("matrix must be a non-empty list of rows")
    if len({len(r) for r in rows}) != 1:
        raise ConfigError("matrix rows have unequal length")
    M = np.array([[parse_complex(x) for x in r] for r in rows], dtype=complex)
    if shape is not None and M.shape != shape:
        raise ConfigError(f"matrix has shape {M.shape}, expected {shape}")
    return M


def encode_complex(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def encode_matrix(M) -> list:
    return [[encode_complex(x) for x in row] for row in np.asarray(M)]


def digest(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, no whitespace)."""
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(text.encode("ascii")).hexdigest()


@dataclass
class ModelConfig:
    """A validated configuration; build models with :meth:`model`."""

    raw: dict
    type: str
    u: complex
    n_shells: int
    period: int
    seed: int | None
    blocks: list = field(repr=False)
    V0: np.ndarray | None = field(default=None, repr=False)

    @property
    def digest(self) -> str:
        return digest(self.raw)

    @property
    def is_zipper(self) -> bool:
        return self.type in ("zipper", "qw1d")

    def zipper_blocks(self, N: int):
        """``(V_0..V_N, W_1..W_N)`` for zipper-like types."""
        if self.type == "qw1d":
            V = [SWAP @ self.blocks[n % self.period] for n in range(N + 1)]
            return V, [SWAP] * N
        if self.type == "zipper":
            p = self.period
            Vp = [b[0] for b in self.blocks]
            Wp = [b[1] for b in self.blocks]
            V0 = Vp[-1] if self.V0 is None else self.V0
            V = [V0] + [Vp[(n - 1) % p] for n in range(1, N + 1)]
            return V, [Wp[(n - 1) % p] for n in range(1, N + 1)]
        raise ConfigError(f"type {self.type!r} is not a zipper")

    def model(self, n_shells: int | None = None, u=None) -> OneChannelModel:
        n_shells = self.n_shells if n_shells is None else int(n_shells)
        N = n_shells - 1
        u = self.u if u is None else complex(u)
        if self.type == "qw1d":
            coins = [self.blocks[n % self.period] for n in range(n_shells)]
            return build_qw1d(coins, u)
        if self.type == "zipper":
            V, W = self.zipper_blocks(N)
            return build_zipper(ZipperSpec(tuple(V), tuple(W)), u)
        if self.type == "carbon":
            bl = [self.blocks[n % self.period] for n in range(n_shells)]
            return build_generalized_qw([b[0] for b in bl], [b[1] for b in bl], [b[2] for b in bl], u)
        return build_stroboscopic(N, self.blocks, None, u)

    def periodic_zipper(self):
        """The underlying :class:`~onechannel.periodic.PeriodicZipper`."""
        from .periodic import PeriodicZipper

        if not self.is_zipper:
            raise ConfigError("bands require zipper")
        if self.type == "qw1d":
            return PeriodicZipper(tuple(SWAP @ C for C in self.blocks), (SWAP,) * self.period, None, self.u)
        return PeriodicZipper(tuple(b[0] for b in self.blocks), tuple(b[1] for b in self.blocks), self.V0, self.u)


def _random_blocks(kind: str, period: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    if kind in ("qw1d", "stroboscopic"):
        return [haar_unitary(2, rng) for _ in range(period)]
    if kind == "zipper":
        return [(haar_unitary(2, rng), haar_unitary(2, rng)) for _ in range(period)]
    raise ConfigError("carbon configs need explicit blocks")


def parse_config(cfg: dict) -> ModelConfig:
    """Validate a decoded JSON config.

    Raises
    ------
    ConfigError
        On any schema violation or if the blocks do not form a valid model.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - _KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    kind = cfg.get("type")
    if kind not in TYPES:
        raise ConfigError(f"type must be one of {TYPES}, got {kind!r}")
    u = parse_complex(cfg.get("u", [1.0, 0.0]))
    if abs(abs(u) - 1.0) > 1e-10:
        raise ConfigError("u must be unimodular")
    n_shells = cfg.get("n_shells")
    if not isinstance(n_shells, int) or isinstance(n_shells, bool) or n_shells < 1:
        raise ConfigError("n_shells must be a positive integer")
    seed = cfg.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise ConfigError("seed must be a non-negative integer")
    period = cfg.get("period")
    raw_blocks = cfg.get("blocks")

    if raw_blocks is None:
        if seed is None or period is None:
            raise ConfigError("without blocks, both period and seed are required")
        blocks = _random_blocks(kind, int(period), seed)
    else:
        if not isinstance(raw_blocks, list) or not raw_blocks:
            raise ConfigError("blocks must be a non-empty list")
        blocks = [_parse_block(kind, b) for b in raw_blocks]
    if period is None:
        period = len(blocks)
    if not isinstance(period, int) or isinstance(period, bool) or period < 1 or period != len(blocks):
        raise ConfigError(f"period {period!r} does not match {len(blocks)} blocks")
    V0 = None
    if "V0" in cfg:
        if kind != "zipper":
            raise ConfigError("V0 is only meaningful for zipper configs")
        V0 = parse_matrix(cfg["V0"], (2, 2))

    mc = ModelConfig(dict(cfg), kind, u, n_shells, period, seed, blocks, V0)
    try:
        mc.model(min(n_shells, period + 1))
    except OneChannelError as exc:
        raise ConfigError(f"invalid blocks: {exc}") from exc
    return mc


def _parse_block(kind: str, b):
    if kind in ("qw1d", "stroboscopic"):
        return parse_matrix(b, (2, 2))
    if not isinstance(b, dict):
        raise ConfigError(f"{kind} blocks must be objects")
    if kind == "zipper":
        if set(b) != {"V", "W"}:
            raise ConfigError('zipper blocks need exactly the keys "V" and "W"')
        return parse_matrix(b["V"], (2, 2)), parse_matrix(b["W"], (2, 2))
    if set(b) != {"size", "up_down", "coin"}:
        raise ConfigError('carbon blocks need the keys "size", "up_down", "coin"')
    size = b["size"]
    ud = b["up_down"]
    if not isinstance(size, int) or not (isinstance(ud, list) and len(ud) == 2 and all(isinstance(i, int) for i in ud)):
        raise ConfigError("carbon block: size must be an int and up_down a pair of ints")
    return size, tuple(ud), parse_matrix(b["coin"], (size, size))


def load_config(path) -> ModelConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return parse_config(cfg)
