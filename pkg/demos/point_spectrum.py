"""Eigenvalues created by a defect block, checked against a large truncation.

    python3 demos/point_spectrum.py
"""
import numpy as np

from onechannel import assemble, band_set, point_spectrum, theta_block, theta_zipper
from onechannel.finite import eigensystem

rot = np.array([[np.cos(2.0), -np.sin(2.0)], [np.sin(2.0), np.cos(2.0)]])
zp = theta_zipper(np.pi / 6, u=1j, V0=theta_block(np.pi / 6) @ rot)
bands = band_set(zp, with_points=False)
print("bands:", [tuple(round(x, 5) for x in arc) for arc in bands.arcs])

N = 300
angles, Z = eigensystem(assemble(zp.to_model(N), N, 1j, 1.0))
shells = np.linalg.norm(Z.reshape(N + 1, 2, -1), axis=1)

for phi, lam in point_spectrum(zp):
    k = int(np.argmin(np.abs(np.angle(np.exp(1j * (angles - phi))))))
    decay = np.exp(np.mean(np.diff(np.log(shells[5:25, k]))))
    print(f"eigenangle {phi:.10f}  truncation {angles[k]:.10f}  "
          f"contraction {lam:.6f}  observed decay per shell {decay:.6f}")
