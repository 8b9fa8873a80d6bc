"""Host-aware expression model: induction-expression curves.

Sweeps the gfp induction strength for a handful of latent-parameter draws and
prints the resulting steady-state expression and relative growth, showing the
interior expression peak and the growth cost of induction.

Run:  python demos/01_hostaware_response_curves.py
"""

import numpy as np

from circuitrl import hostaware
from circuitrl.core import rng_from_key, sample_prior
from circuitrl.scenarios import load_scenario

config = load_scenario("hostaware")
grid = np.linspace(0.0, config.bounds.hi[0], 16)
rng = rng_from_key(2024)

print("induction ->", "  ".join(f"{a:7.0f}" for a in grid))
for draw in range(4):
    theta = sample_prior(config.prior, rng)
    gfp, lam = hostaware.response_curve(theta, grid, config.host_settings())
    rel = lam / lam[0]
    label = ", ".join(f"{k}={v:.2f}" for k, v in theta)
    print(f"\ntheta: {label}")
    print("gfp_ss    ", "  ".join(f"{g:7.0f}" for g in gfp))
    print("growth/g0 ", "  ".join(f"{r:7.2f}" for r in rel))
    k = int(np.argmax(gfp))
    print(f"peak at w = {grid[k]:.0f} with gfp = {gfp[k]:.0f}")
