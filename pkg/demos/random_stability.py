"""Fourth moment of transfer products under decaying random perturbations.

With square-summable amplitudes (alpha = 1) the moment stays bounded in n;
with a constant amplitude (alpha = 0) it grows.

    python3 demos/random_stability.py [samples]
"""
import sys

import numpy as np

from onechannel import EnsembleConfig, fourth_moment_curve, theta_zipper

samples = int(sys.argv[1]) if len(sys.argv) > 1 else 200
base = theta_zipper(np.pi / 6, u=1j)
periods = [25, 50, 100, 200]

for alpha in (1.0, 0.75, 0.0):
    cfg = EnsembleConfig(base, alpha=alpha, c=0.1, realizations=samples, seed=12345, allow_nonsummable=alpha <= 0.5)
    curve = fourth_moment_curve(cfg, np.pi / 2, periods)
    row = "  ".join(f"{m:10.3f}" for m in curve.moment4)
    print(f"alpha = {alpha:4.2f}:  {row}   ratio 200/100 = {curve.moment4[-1] / curve.moment4[-2]:.3f}")
