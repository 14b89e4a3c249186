import warnings

import numpy as np
import pytest
from hypothesis import settings

from fastice.mesh import build_uniform_mesh
from fastice.momentum import SubgridWarning

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_subgrid():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SubgridWarning)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def mesh16():
    return build_uniform_mesh((512e3, 512e3), 16e3)


@pytest.fixture
def small_mesh():
    return build_uniform_mesh((4.0, 4.0), 1.0)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end checks on the reference experiments")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
