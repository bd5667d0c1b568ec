import numpy as np
import pytest

from gzk.services.spectral_core import field_from_function, make_grid


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run acceptance-scale tests marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def grid():
    """128^2 on a 16 pi box: dx ~ 0.39, wide enough for unit-speed solitons."""
    return make_grid(128, 128, 16 * np.pi, 16 * np.pi)


@pytest.fixture
def small_grid():
    return make_grid(64, 64, 20.0, 20.0)


@pytest.fixture
def gaussian(small_grid):
    return field_from_function(small_grid, lambda X, Y: 0.5 * np.exp(-(X ** 2 + Y ** 2)))


@pytest.fixture
def rng():
    return np.random.default_rng(7)
