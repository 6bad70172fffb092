import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import _acceptance_report


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = _acceptance_report.lines()
    if not lines:
        return
    terminalreporter.section("acceptance checks")
    for line in lines:
        terminalreporter.write_line(line)
