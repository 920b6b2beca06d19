import numpy as np
import pytest

from betaspec import derive_stream, sample_gbe


@pytest.fixture
def rng():
    return derive_stream(20240601, 0)


@pytest.fixture
def random_op():
    def make(beta=1.0, N=50, seed=3, stream=0):
        return sample_gbe(beta, N, derive_stream(seed, stream))

    return make


def chi_mean(k):
    from betaspec import log_gamma

    return float(np.exp(log_gamma((k + 1) / 2) - log_gamma(k / 2)))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
