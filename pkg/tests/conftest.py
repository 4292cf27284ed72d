"""Shared fixtures for the forecaster tests."""
from collections.abc import Callable

import numpy as np
import pytest

from pbca_forecast.config import ForecastConfig, Variant
from pbca_forecast.model import ForecastModel


def pytest_addoption(parser):
    """Add the option enabling the training experiments."""
    parser.addoption("--runslow", action="store_true", default=False, help="run slow training experiments")


def pytest_configure(config):
    """Register custom markers."""
    config.addinivalue_line("markers", "slow: long-running training experiments")


def pytest_collection_modifyitems(config, items):
    """Skip slow tests unless --runslow is given."""
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> np.random.Generator:
    """Return a seeded generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def make_config() -> Callable[..., ForecastConfig]:
    """Return a factory for toy configurations."""

    def factory(variant: str = "A", **changes) -> ForecastConfig:
        values = {"T": 8, "T_prime": 2, "n": 3, "m": 4, "K": 1, "target": 0, "l2": 0.0, "seed": 3}
        values.update(changes)
        return ForecastConfig(variant=Variant.parse(variant), **values)

    return factory


@pytest.fixture
def make_model(make_config) -> Callable[..., ForecastModel]:
    """Return a factory for seeded toy models."""

    def factory(variant: str = "A", **changes) -> ForecastModel:
        return ForecastModel.initialize(make_config(variant, **changes))

    return factory
