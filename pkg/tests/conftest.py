"""Shared fixtures and the --runslow switch for Monte Carlo tests"""
import pytest

from hauslev.config import get_settings
from hauslev.services.levelset_service import get_levelset_service
from hauslev.services.synth import make_model


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte Carlo tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def fresh_settings():
    """Settings and the service are cached per process; tests that set env vars need a clean cache"""
    get_settings.cache_clear()
    get_levelset_service.cache_clear()
    yield
    get_settings.cache_clear()
    get_levelset_service.cache_clear()


@pytest.fixture(scope="session")
def interval_model():
    """[0.25, 0.75] at gamma = 0.8, linear around the boundary"""
    return make_model(d=1, gamma=0.8, alpha=1.0, shape="interval")


@pytest.fixture(scope="session")
def jump_model():
    """[0.25, 0.75] at gamma = 0.8 with a jump at the boundary"""
    return make_model(d=1, gamma=0.8, alpha=0.0, shape="interval")


@pytest.fixture(scope="session")
def uniform_model():
    return make_model(d=1, gamma=1.0, alpha=1.0, shape="uniform")
