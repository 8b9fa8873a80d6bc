"""Gaussian-process Bayesian optimization on one host-aware instance.

Fits simulator-informed GP hyperparameters from prior-draw curves, then runs
the five-step protocol (random probe, hedged acquisitions, posterior-mean
exploit) against a hidden latent draw.

Run:  python demos/04_bo_baseline.py     (takes a few minutes)
"""

import numpy as np

from circuitrl import bo, hostaware
from circuitrl.core import rng_from_key, sample_prior, scale_action
from circuitrl.scenarios import load_scenario

config = load_scenario("hostaware")
settings = config.host_settings()
rng = rng_from_key(11)

def curve(theta, xs):
    out = np.empty(xs.size)
    for i, x in enumerate(xs):
        a = scale_action(np.array([x]), config.bounds)[0]
        out[i] = hostaware.simulate_to_steady_state(theta, float(a), settings).gfp_ss
    return out

print("fitting GP prior from 40 simulator curves...")
gp = bo.fit_gp_prior(config.prior, curve, rng, n_curves=40, grid_size=20)
print(f"  mu0 = {gp.mu0:.0f}, lengthscale = {gp.ls:.3f}, "
      f"signal sd = {np.sqrt(gp.sf2):.0f}, noise sd = {np.sqrt(gp.sn2):.0f}")

theta_true = sample_prior(config.prior, rng)
print("hidden latents:", {k: round(v, 3) for k, v in theta_true})

def objective(x):
    a = scale_action(np.array([x]), config.bounds)[0]
    return hostaware.simulate_to_steady_state(theta_true, float(a), settings).gfp_ss

ep = bo.run_bo_episode(gp, objective, rng, horizon=config.horizon)
for t, (a, y, how) in enumerate(zip(ep.actions, ep.outcomes, ep.acquisition_log), 1):
    w = scale_action(np.array([a]), config.bounds)[0]
    print(f"step {t}: w = {w:7.1f}  gfp = {y:9.1f}   [{how}]")
