import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bundle_pd.core import ProblemSpec, QuadraticSmooth, ZeroRegularizer

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def scalar_problem():
    """f = x^2/2, h = 0, constraint x = 1: x* = 1, v* = -1, F* = 0.5."""
    return ProblemSpec(QuadraticSmooth(np.eye(1), np.zeros(1)), ZeroRegularizer(),
                       np.array([[1.0]]), np.array([1.0]), beta=1.0, mu=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
