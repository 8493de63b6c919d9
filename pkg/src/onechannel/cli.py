"""Command-line front end.

Subcommands write CSV/JSON files into ``--out`` together with a
``manifest.json``.  Exit codes: 0 success, 1 selftest failure, 2 usage or
configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .exceptions import ConfigError, OneChannelError

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
THREADS_ENV = "ONECHANNEL_THREADS"


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write(path: Path, text: str):
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(text)


def _manifest(out: Path, command: str, digest, seed, grids: dict, t0: float, files: list, extra=None):
    man = {
        "command": command,
        "config_digest": digest,
        "seed": seed,
        "grids": grids,
        "version": __version__,
        "wall_time": round(time.perf_counter() - t0, 6),
        "files": files,
    }
    if extra:
        man.update(extra)
    _write(out / "manifest.json", json.dumps(man, indent=2, sort_keys=True) + "\n")


def _limit_threads(n):
    """Cap BLAS worker threads when threadpoolctl is available."""
    if not n:
        return None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return None
    return threadpool_limits(limits=int(n))


def _parse_u(text):
    if text is None:
        return None
    try:
        u = complex(text.replace(" ", ""))
    except ValueError as exc:
        raise CLIError(EXIT_CONFIG, f"cannot parse --u {text!r}") from exc
    if abs(abs(u) - 1) > 1e-10:
        raise CLIError(EXIT_CONFIG, "--u must be unimodular")
    return u


def _check_model(model):
    a1 = model.a1_failures()
    if a1:
        raise CLIError(EXIT_NUMERIC, f"A1 failure: channel modes disconnected in shells {a1}")
    a2 = model.a2_failures()
    if a2:
        raise CLIError(EXIT_NUMERIC, f"A2 failure: vanishing coupling entry at levels {a2}")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_density(args) -> int:
    from .spectrum import carmona_density, density_mass

    t0 = time.perf_counter()
    cfg = load_config(args.config)
    n_shells = cfg.n_shells if args.n is None else args.n + 1
    if n_shells < 1:
        raise CLIError(EXIT_CONFIG, "--n must be >= 0")
    model = cfg.model(n_shells, _parse_u(args.u))
    _check_model(model)
    dg = carmona_density(model, None, model.N, args.grid)
    if not np.all(np.isfinite(dg.values[~dg.mask])):
        raise CLIError(EXIT_NUMERIC, "density is not finite on the grid")
    out = _outdir(args)
    _write(out / "density.csv", dg.to_csv())
    _manifest(
        out, "density", cfg.digest, cfg.seed, {"grid": args.grid, "n": model.N}, t0, ["density.csv"],
        {"mass": density_mass(dg), "masked": int(dg.mask.sum())},
    )
    return EXIT_OK


def cmd_bands(args) -> int:
    from .periodic import band_set

    t0 = time.perf_counter()
    cfg = load_config(args.config)
    if not cfg.is_zipper:
        raise CLIError(EXIT_CONFIG, "bands require zipper")
    _check_model(cfg.model(cfg.period + 1))
    z = cfg.periodic_zipper()
    u = _parse_u(args.u)
    bs = band_set(z, grid=args.grid, with_points=False)
    from .periodic import point_spectrum

    pts = point_spectrum(z, z.u if u is None else u, scan_grid=args.grid, bands=bs)
    out = _outdir(args)
    rows = ["arc_start,arc_end"] + [f"{_fmt(a)},{_fmt(b)}" for a, b in bs.arcs]
    _write(out / "bands.csv", "\n".join(rows) + "\n")
    rows = ["eig_angle,contraction"] + [f"{_fmt(a)},{_fmt(c)}" for a, c in pts]
    _write(out / "points.csv", "\n".join(rows) + "\n")
    _manifest(out, "bands", cfg.digest, cfg.seed, {"grid": args.grid, "scan_grid": bs.grid_size}, t0,
              ["bands.csv", "points.csv"])
    return EXIT_OK


def _parse_periods(text) -> list:
    try:
        ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise CLIError(EXIT_CONFIG, f"cannot parse --periods {text!r}") from exc
    if not ks or min(ks) < 0:
        raise CLIError(EXIT_CONFIG, "--periods needs non-negative integers")
    return ks


def cmd_ensemble(args) -> int:
    from .ensemble import EnsembleConfig, fourth_moment_curve, moments_csv
    from .periodic import band_set

    t0 = time.perf_counter()
    cfg = load_config(args.config)
    if not cfg.is_zipper:
        raise CLIError(EXIT_CONFIG, "ensemble requires zipper")
    _check_model(cfg.model(cfg.period + 1))
    base = cfg.periodic_zipper()
    periods = _parse_periods(args.periods)
    seed = args.seed if args.seed is not None else (cfg.seed or 0)
    ecfg = EnsembleConfig(base, args.alpha, args.c, args.samples, seed, max(periods) * base.period,
                          allow_nonsummable=args.allow_nonsummable)
    phi = args.phi
    if phi is None:
        arcs = band_set(base, with_points=False).arcs
        a, b = max(arcs, key=lambda ab: ab[1] - ab[0])
        phi = 0.5 * (a + b)
    curve = fourth_moment_curve(ecfg, phi, periods)
    out = _outdir(args)
    _write(out / "moments.csv", moments_csv(curve))
    info = {
        "config": ecfg.describe(),
        "phi": phi,
        "n_periods": [int(k) for k in curve.n_periods],
        "moment4": [float(m) for m in curve.moment4],
        "stderr": [float(e) for e in curve.stderr],
        "streams": "Philox keyed by SeedSequence(seed); counter = (0, n, tag, realization)",
        "config_digest": cfg.digest,
    }
    _write(out / "ensemble.json", json.dumps(info, indent=2, sort_keys=True) + "\n")
    _manifest(out, "ensemble", cfg.digest, seed, {"samples": args.samples, "periods": periods}, t0,
              ["moments.csv", "ensemble.json"])
    return EXIT_OK


def cmd_selftest(args) -> int:
    # looked up at call time so that a patched module is what runs
    from . import selftest

    t0 = time.perf_counter()
    report = selftest.run_selftest(args.scale, args.seed)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        out = _outdir(args)
        _write(out / "selftest.json", text + "\n")
        _manifest(out, "selftest", None, args.seed, {"scale": args.scale}, t0, ["selftest.json"])
    if not report["passed"]:
        print("selftest failed: " + ", ".join(report["failed"]), file=sys.stderr)
        return EXIT_SELFTEST
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(EXIT_CONFIG, message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="onechannel", description="Spectral tools for one-channel unitary operators.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help=f"cap on worker threads (default: ${THREADS_ENV} or library default)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("density", help="spectral density on a uniform angle grid")
    d.add_argument("config")
    d.add_argument("--n", type=int, default=None, help="truncation level (default: n_shells - 1)")
    d.add_argument("--grid", type=int, default=4096)
    d.add_argument("--u", default=None, help="boundary phase, e.g. 1 or 0+1j")
    d.add_argument("--out", default=".")
    d.set_defaults(func=cmd_density)

    b = sub.add_parser("bands", help="band arcs and eigenvalues of a periodic zipper")
    b.add_argument("config")
    b.add_argument("--grid", type=int, default=2048)
    b.add_argument("--u", default=None)
    b.add_argument("--out", default=".")
    b.set_defaults(func=cmd_bands)

    e = sub.add_parser("ensemble", help="fourth-moment curves of randomly perturbed zippers")
    e.add_argument("config")
    e.add_argument("--alpha", type=float, default=1.0)
    e.add_argument("--c", type=float, default=0.1)
    e.add_argument("--samples", type=int, default=100)
    e.add_argument("--periods", default="50,100,200", help="comma-separated period counts")
    e.add_argument("--phi", type=float, default=None, help="angle inside a band (default: centre of widest arc)")
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--allow-nonsummable", action="store_true", help="permit alpha <= 1/2 (control runs)")
    e.add_argument("--out", default=".")
    e.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("selftest", help="run the built-in invariant suites")
    s.add_argument("--scale", choices=("small", "full"), default="small")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    threads = args.threads if args.threads is not None else os.environ.get(THREADS_ENV)
    try:
        limiter = _limit_threads(int(threads)) if threads else None
    except ValueError:
        print(f"error: invalid thread count {threads!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OneChannelError, ArithmeticError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
