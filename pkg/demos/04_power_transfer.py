"""
Wireless power transfer
=======================

Maximising received power is handled by the same minimiser on the negated
objective. For a single user the optimum is known (phase grid plus matched
beamforming), so the gap can be read off directly.
"""

from dataclasses import replace

from risbo.experiments import EXPERIMENT_BO, ExperimentConfig, run_scenario
from risbo.system_model import LargeScaleModel, SystemConfig

cfg = ExperimentConfig(scenario="power-transfer-total", system=SystemConfig(K=1, N=2),
                       large_scale=LargeScaleModel(), tx_power_dbm=(0.0, 15.0, 30.0),
                       bo=replace(EXPERIMENT_BO, T=150), realizations=3)
table = run_scenario(cfg)
for p in cfg.tx_power_dbm:
    got = table.value("received_power_dbm", p)
    best = table.value("oracle_power_dbm", p)
    print(f"P = {p:4.1f} dBm: BO {got:7.2f} dBm, oracle {best:7.2f} dBm, gap {best - got:.2f} dB")
