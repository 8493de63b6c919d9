"""Bands of a periodic zipper and how the finite-n density fills them.

The density at level n integrates to one exactly, but it develops sharp
peaks next to the band edges whose width shrinks with n.  A uniform grid
only reproduces the unit mass once it resolves them.

    python3 demos/bands_and_density.py
"""
import numpy as np

from onechannel import band_set, carmona_density, density_mass, theta_zipper

for theta in (np.pi / 6, np.pi / 3, np.pi / 2):
    zp = theta_zipper(theta, u=1j)
    bs = band_set(zp, with_points=False)
    arcs = ", ".join(f"[{a:.4f}, {b:.4f}]" for a, b in bs.arcs)
    print(f"theta = {theta:.4f}: bands {arcs}  (total length {bs.total_length:.4f})")

    for n in (20, 100):
        m = zp.to_model(n)
        masses = []
        for k in (10, 12, 14, 16):
            dg = carmona_density(m, grid_size=1 << k)
            masses.append(density_mass(dg))
        outside = dg.values[~bs.contains(dg.angles)].sum() * dg.step
        cols = "  ".join(f"2^{k}: {x:.6f}" for k, x in zip((10, 12, 14, 16), masses))
        print(f"    n = {n:3d}  mass by grid  {cols}   outside bands {outside:.1e}")

# adaptive quadrature split at the band edges recovers the unit mass exactly
from scipy.integrate import quad  # noqa: E402

from onechannel import density_at  # noqa: E402

m = theta_zipper(np.pi / 6, u=1j).to_model(6)
cuts = [0, np.pi / 3, 2 * np.pi / 3, 4 * np.pi / 3, 5 * np.pi / 3, 2 * np.pi]
total = sum(quad(lambda p: float(density_at(m, p)), a, b, limit=500, epsabs=1e-11)[0] for a, b in zip(cuts, cuts[1:]))
print(f"theta = pi/6, n = 6: adaptive mass {total:.12f}, grid 4096 mass {density_mass(carmona_density(m)):.6f}")
