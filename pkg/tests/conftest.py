import math

import numpy as np
import pytest

from hopfcycle.maps import ToyModelConfig, ToyUnfolding
from hopfcycle.scenarios import toy_ns_point


@pytest.fixture(scope="session")
def toy_cfg():
    return ToyModelConfig()


@pytest.fixture(scope="session")
def family():
    return ToyUnfolding()


@pytest.fixture(scope="session")
def ns6():
    return toy_ns_point(6)


@pytest.fixture(scope="session")
def ns10():
    return toy_ns_point(10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
