import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from remest.encoder import precompute_gains  # noqa: E402
from remest.model import scalar_example  # noqa: E402


@pytest.fixture(scope="session")
def scalar():
    return scalar_example()


@pytest.fixture(scope="session")
def scalar_gains(scalar):
    return precompute_gains(scalar)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
