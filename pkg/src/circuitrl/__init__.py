"""Sequential genetic-circuit design with amortized RL policies.

Mechanistic simulators (host-aware gene expression ODEs, repressilator
Markov jump process), a POMDP environment over latent kinetic parameters,
a PPO trainer, a Gaussian-process Bayesian-optimization baseline, an
evaluation harness, and a human-in-the-loop advisory service.
"""

__version__ = "0.1.0"
