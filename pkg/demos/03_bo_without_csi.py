"""
Bayesian optimisation from pilot feedback
=========================================

The transmitter never sees H or F. It proposes a design, the users report a
single-pilot error estimate, and an additive GP surrogate picks the next
design. Random search with the same budget is the yardstick.
"""

import numpy as np

from risbo.additive_bo import run_bo, run_random_search
from risbo.experiments import EXPERIMENT_BO, init_design
from risbo.known_csi import solve_known_csi
from risbo.parametrization import decode, domain_box
from risbo.system_model import (SystemConfig, estimate_sum_mse, exact_sum_mse,
                                sample_channels, snr_to_noise_var)

rng = np.random.default_rng(7)
cfg = SystemConfig(noise_var=snr_to_noise_var(20.0))
ch = sample_channels(cfg, rng)
box = domain_box(cfg)
pilots = np.random.default_rng(8)


def feedback(x):
    return estimate_sum_mse(decode(x, cfg), ch, cfg.noise_var, 1, pilots)


bo = run_bo(feedback, box, EXPERIMENT_BO, np.random.default_rng(1),
            init_sampler=lambda g: init_design(cfg, g))
rs = run_random_search(feedback, box, len(bo), np.random.default_rng(1))


def true_mse(x):
    return exact_sum_mse(decode(x, cfg), ch, cfg.noise_var)


# the recommendation discounts lucky pilot draws; it is the better report on
# average over channels, not on every single one
print("evaluations:", len(bo))
print(f"BO recommended design, exact MSE:   {true_mse(bo.x_recommended):.4f}")
print(f"BO best observed design, exact MSE:  {true_mse(bo.x_best):.4f}")
print(f"random search, exact MSE:            {true_mse(rs.x_best):.4f}")
print(f"mean of the initial samples:         "
      f"{np.mean([true_mse(x) for x in bo.X[:EXPERIMENT_BO.W]]):.4f}")
print(f"perfect-CSI reference:               "
      f"{solve_known_csi(ch.H, ch.F, cfg.P, cfg.noise_var).trace[-1]:.4f}")

# the incumbent settles well before the budget runs out
inc = [true_mse(bo.X[int(np.argmin(bo.y[:i + 1]))]) for i in range(len(bo))]
for i in (20, 50, 100, 200, len(bo) - 1):
    print(f"  after {i:3d} evaluations: {inc[i]:.4f}")
