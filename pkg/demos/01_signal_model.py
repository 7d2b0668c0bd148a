"""
The RIS downlink and its pilot-based feedback
=============================================

Draw one channel, decode a random design vector and compare the exact sum
MSE with what the users can actually report: an average over a few pilot
symbols.
"""

import numpy as np

from risbo.experiments import init_design
from risbo.parametrization import decode, domain_box
from risbo.system_model import (SystemConfig, estimate_sum_mse, exact_sum_mse,
                                sample_channels, snr_to_noise_var)

rng = np.random.default_rng(0)
cfg = SystemConfig(M=2, N=2, K=2, P=1.0, noise_var=snr_to_noise_var(20.0))
ch = sample_channels(cfg, rng)

# the search space is a box of D = 2(M+1)K + N - 1 angles
box = domain_box(cfg)
print("design dimension:", box.dim)

x = init_design(cfg, rng)
d = decode(x, cfg)
print("tr(W^H W) =", d.power, " |phi| =", np.abs(d.phi))

exact = exact_sum_mse(d, ch, cfg.noise_var)
print(f"exact sum MSE: {exact:.4f}")

# one pilot vector per feedback is what the optimiser sees; it is unbiased but noisy
for kappa in (1, 10, 1000):
    est = [estimate_sum_mse(d, ch, cfg.noise_var, kappa, rng) for _ in range(2000)]
    print(f"kappa={kappa:5d}: mean {np.mean(est):.4f}, std {np.std(est):.4f}")
