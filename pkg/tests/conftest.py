import numpy as np
import pytest

from risbo.system_model import ChannelRealization, Design, SystemConfig, complex_normal


def random_instance(rng, M=2, N=2, K=2, P=1.0):
    """Random channels plus a random full-power design."""
    H = complex_normal(rng, (N, M))
    F = complex_normal(rng, (K, N))
    W = complex_normal(rng, (M, K))
    W *= np.sqrt(P) / np.linalg.norm(W)
    phi = np.exp(2j * np.pi * rng.uniform(size=N))
    c = complex_normal(rng, K)
    return Design(W, phi, c), ChannelRealization(H, F)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def cfg222():
    return SystemConfig(M=2, N=2, K=2, P=1.0, noise_var=0.01)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
