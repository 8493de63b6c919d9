"""Built-in invariant suites, runnable from the command line.

Each suite draws random inputs from a fixed seed, evaluates one family of
identities against an independent computation and reports the worst error.
Library functions are looked up through their modules at call time, so a
patched implementation is what gets tested.
"""
from __future__ import annotations

import time

import numpy as np

from . import finite, mat2core, transfer
from .model import OneChannelModel, Shell, random_model

SCALES = {
    "small": {"phi": 2000, "schur": 200, "tr_models": 40, "tr_z": 5, "green_models": 10},
    "full": {"phi": 10_000, "schur": 1000, "tr_models": 200, "tr_z": 20, "green_models": 50},
}

_UP = np.array([[1, 1], [0, 1]], dtype=complex)
_LO = np.array([[1, 0], [-1, 1]], dtype=complex)
_UPN = np.array([[1, -1], [0, 1]], dtype=complex)
_LOP = np.array([[1, 0], [1, 1]], dtype=complex)


def _err(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def suite_phi(n: int, rng) -> tuple:
    """phi maps: U(1,1) membership, inversion, conjugation identities, linear-system oracle."""
    m2 = mat2core
    worst = 0.0
    Ms = m2.haar_unitary(2, rng, size=n)
    Ms = Ms[np.abs(Ms[:, 0, 1]) > 1e-6]
    I2 = np.eye(2)
    for M in Ms:
        S, F = m2.phi_sharp(M), m2.phi_flat(M)
        errs = [m2.u11_defect(S), m2.u11_defect(F)]
        errs.append(_err(S, m2.phi_flat(M.conj().T)))
        errs.append(_err(m2.phi_sharp_inv(S), M))
        errs.append(_err(m2.phi_flat_inv(F), M))
        U, V = np.exp(2j * np.pi * rng.random(2))
        errs.append(_err(m2.phi_sharp(np.diag([U, V]) @ M), np.diag([1, V]) @ S @ np.diag([1 / U, 1])))
        K = I2 + M
        if abs(np.linalg.det(K)) > 1e-3:
            N2 = np.linalg.solve(K, M)
            if abs(N2[0, 1]) > 1e-6:
                errs.append(_err(m2.phi_sharp(N2), _UP @ S @ _LO))
        # (Psi-, Psi+) = M (Phi-, Phi+)  <=>  S (Psi-, Phi-) = (Phi+, Psi+)
        phi = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        psi = M @ phi
        errs.append(_err(S @ np.array([psi[0], phi[0]]), np.array([phi[1], psi[1]])))
        worst = max(worst, max(errs))
    z = np.exp(1j * np.pi / 3)
    fixed = [
        _err(m2.phi_sharp(m2.SWAP), I2),
        _err(m2.phi_sharp(np.array([[0, 1j], [1j, 0]])), np.diag([-1j, 1j])),
        _err(m2.phi_sharp(z * m2.SWAP), np.diag([1 / z, z])),
        _err(m2.phi_flat(z * m2.SWAP), np.diag([z, 1 / z])),
        _err(m2.phi_sharp_inv(I2), m2.SWAP),
    ]
    return max(worst, max(fixed)), 1e-10, len(Ms) + len(fixed)


def suite_schur(n: int, rng) -> tuple:
    """Channel blocks on the unit circle are unitary."""
    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(3, 7))
        i, j = rng.choice(k, size=2, replace=False)
        model = OneChannelModel((Shell(mat2core.haar_unitary(k, rng), int(i), int(j)),), ())
        z = np.exp(2j * np.pi * rng.random())
        worst = max(worst, mat2core.unitary_defect(transfer.channel_block(model, 0, z)))
    return worst, 1e-9, n


def _z_annulus(rng, k, lo=0.5, hi=0.95):
    return rng.uniform(lo, hi, k) * np.exp(2j * np.pi * rng.random(k))


def suite_transfer_resolvent(n_models: int, n_z: int, rng) -> tuple:
    """Transfer products against dense boundary resolvents, (1,1) and (u,v) forms."""
    worst = 0.0
    cases = 0
    for _ in range(n_models):
        N = int(rng.integers(0, 6))
        model = random_model(rng, N)
        u, v = np.exp(2j * np.pi * rng.random(2))
        for z in _z_annulus(rng, n_z):
            T = transfer.transfer_product(model, z, N).matrix
            R11 = finite.boundary_resolvent(model, N, 1.0, 1.0, z)
            worst = max(worst, _rel(_UP @ mat2core.phi_sharp(R11) @ _LO, T))
            Ruv = finite.boundary_resolvent(model, N, u, v, z)
            rhs = _UPN @ np.diag([v, 1]) @ T @ np.diag([1, 1 / u]) @ _LOP
            worst = max(worst, _rel(mat2core.phi_sharp(Ruv), rhs))
            cases += 2
    return worst, 1e-7, cases


def suite_averaged_green(n_models: int, rng) -> tuple:
    """Closed-form boundary-averaged Green value against a 512-point quadrature."""
    worst = 0.0
    for _ in range(n_models):
        N = int(rng.integers(0, 6))
        model = random_model(rng, N)
        z = 0.9 * np.exp(2j * np.pi * rng.random())
        g = finite.averaged_green(model, N, model.u, z)
        q = finite.averaged_green_quadrature(model, N, model.u, z, n_v=512, max_n_v=512)
        worst = max(worst, abs(g - q))
    return worst, 1e-8, n_models


def run_selftest(scale: str = "small", seed: int = 0, only=None) -> dict:
    """Run all suites; returns a JSON-ready report with ``passed`` at top level."""
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {sorted(SCALES)}")
    s = SCALES[scale]
    jobs = {
        "phi-identities": lambda r: suite_phi(s["phi"], r),
        "schur-unitarity": lambda r: suite_schur(s["schur"], r),
        "transfer-resolvent": lambda r: suite_transfer_resolvent(s["tr_models"], s["tr_z"], r),
        "averaged-green": lambda r: suite_averaged_green(s["green_models"], r),
    }
    report = {"scale": scale, "seed": seed, "suites": []}
    for k, (name, job) in enumerate(jobs.items()):
        if only and name not in only:
            continue
        rng = np.random.default_rng([seed, k])
        t0 = time.perf_counter()
        try:
            err, tol, cases = job(rng)
            ok = bool(np.isfinite(err) and err < tol)
            entry = {"name": name, "passed": ok, "max_error": float(err), "tolerance": tol, "cases": cases}
        except Exception as exc:  # a crashing suite is a failing suite
            entry = {"name": name, "passed": False, "error": f"{type(exc).__name__}: {exc}"}
        entry["seconds"] = round(time.perf_counter() - t0, 3)
        report["suites"].append(entry)
    report["failed"] = [e["name"] for e in report["suites"] if not e["passed"]]
    report["passed"] = not report["failed"]
    return report
