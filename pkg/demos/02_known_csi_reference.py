"""
Perfect-CSI reference
=====================

With the channels known, the precoder and filters have closed forms and the
RIS phases are improved by majorisation-minimisation. Each block lowers the
sum MSE, so the trace only goes down.
"""

import numpy as np

from risbo.known_csi import brute_force_sum_mse, solve_known_csi
from risbo.system_model import SystemConfig, sample_channels, snr_to_noise_var

rng = np.random.default_rng(3)
cfg = SystemConfig(M=2, N=2, K=2)
ch = sample_channels(cfg, rng)

for snr in (0, 10, 20):
    nv = snr_to_noise_var(snr)
    res = solve_known_csi(ch.H, ch.F, cfg.P, nv)
    print(f"SNR {snr:2d} dB: {len(res.trace):3d} outer iterations, "
          f"sum MSE {res.trace[-1]:.5f}")

# a brute-force phase grid confirms the alternating solution at 20 dB
nv = snr_to_noise_var(20)
bf = brute_force_sum_mse(ch.H, ch.F, cfg.P, nv, n_grid=180, restarts=5)
print("brute force:", round(bf, 5), " alternating:", round(solve_known_csi(ch.H, ch.F, 1.0, nv).trace[-1], 5))
