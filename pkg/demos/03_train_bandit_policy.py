"""Train a tiny PPO policy on the quadratic test bandit.

The optimum sits at action 0.3; a couple of minutes of CPU suffice to recover
it. This is the smallest end-to-end run of the training stack.

Run:  python demos/03_train_bandit_policy.py
"""

import numpy as np

from circuitrl.ppo import PpoConfig, train
from circuitrl.scenarios import load_scenario

config = load_scenario("bandit-quadratic")
ppo = PpoConfig.from_scenario(config, total_steps=60_000)
res = train(config, ppo, seed=0,
            log_fn=lambda r: print(f"update {r.update:3d}  return {r.mean_return:8.4f}")
            if r.update % 5 == 0 else None)
net = res.checkpoint.net
mean, std, _ = net.forward(np.zeros((1, net.spec.input_dim)))
print(f"\nlearned action mean = {float(mean[0, 0]):.4f} (optimum 0.3), "
      f"std = {float(std[0]):.4f}")
