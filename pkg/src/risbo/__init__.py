"""Joint RIS phase, precoder and receive-filter design without channel knowledge.

The transmitter only sees pilot-based error (or harvested power) feedback and
searches the design space with windowed, additive Gaussian-process Bayesian
optimisation. A perfect-CSI alternating optimiser serves as the reference.
"""

from .additive_bo import BoConfig, BoTrace, Partition, run_bo, run_random_search
from .experiments import (SCENARIOS, ExperimentConfig, ResultTable, emit_results, load_config,
                          parse_results, run_scenario)
from .gp import KernelSpec, SampleWindow, posterior
from .known_csi import BaselineConfig, solve_known_csi
from .parametrization import DomainBox, decode, domain_box, encode
from .system_model import (ChannelRealization, Design, LargeScaleModel, SystemConfig,
                           estimate_sum_mse, exact_sum_mse, sample_channels)

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig",
    "BoConfig",
    "BoTrace",
    "ChannelRealization",
    "Design",
    "DomainBox",
    "ExperimentConfig",
    "KernelSpec",
    "LargeScaleModel",
    "Partition",
    "ResultTable",
    "SCENARIOS",
    "SampleWindow",
    "SystemConfig",
    "decode",
    "domain_box",
    "emit_results",
    "encode",
    "estimate_sum_mse",
    "exact_sum_mse",
    "load_config",
    "parse_results",
    "posterior",
    "run_bo",
    "run_random_search",
    "run_scenario",
    "sample_channels",
    "solve_known_csi",
]
