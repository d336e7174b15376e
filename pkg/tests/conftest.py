"""
Shared fixtures and the --runslow switch for Monte Carlo acceptance tests.
"""

import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte Carlo tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo acceptance check, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def heteroscedastic_sample(rng):
    """n=400 draw of Y = 2X + sqrt(1 + X^2) u with independent Gaussian X and u."""
    x = rng.standard_normal(400)
    u = rng.standard_normal(400)
    y = 2.0 * x + np.sqrt(1.0 + x * x) * u
    return x, y
