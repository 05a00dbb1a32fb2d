import pytest

from fgn_engine import RandomStream


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: verifiche Monte Carlo lunghe (escludi con -m 'not slow')")


@pytest.fixture
def stream():
    return RandomStream(seed=20240917)
