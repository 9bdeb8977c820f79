import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Print the one-line-per-criterion acceptance report, if that module ran."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
