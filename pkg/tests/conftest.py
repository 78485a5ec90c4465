import numpy as np
import pytest

from splitfsk.channel import channel_from_tf
from splitfsk.circuit import derive_transfer_function, find_poles, reference_params


@pytest.fixture(scope="session")
def params():
    return reference_params(0.4)


@pytest.fixture(scope="session")
def tf(params):
    return derive_transfer_function(params)


@pytest.fixture(scope="session")
def poles(tf):
    return find_poles(tf)


@pytest.fixture(scope="session")
def fir20(tf):
    """Reference FIR channel at 20 MHz."""
    return channel_from_tf(tf, 20e6)


def count_local_maxima(values):
    v = np.asarray(values)
    return int(np.sum((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=_criterion_key):
        terminalreporter.write_line(line)


def _criterion_key(line):
    label = line.split()[1]
    number = "".join(ch for ch in label if ch.isdigit())
    return int(number), label
