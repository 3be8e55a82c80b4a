import numpy as np
import pytest

from app.core.models import RobotParams, ScenarioConfig


@pytest.fixture
def params() -> RobotParams:
    return RobotParams()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def _merge(base: dict, overrides: dict) -> ScenarioConfig:
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            base[key] = {**base[key], **value}
        else:
            base[key] = value
    return ScenarioConfig.model_validate(base)


def short_scenario(**overrides) -> ScenarioConfig:
    """Small closed loop: 20 s on the default circle, attack on the wheel channels from 5 s.

    The oracle localizes the wheel channels at 0.6 and the others at 0.9.
    """
    base = {
        "duration": 20.0,
        "attack": {"channels": [2, 3], "start_time": 5.0},
        "oracle": {"p": [0.9, 0.9, 0.6, 0.6, 0.9, 0.9], "tnr": 0.95},
        "seed": 3,
    }
    return _merge(base, overrides)


def stealth_scenario(**overrides) -> ScenarioConfig:
    """Default-budget attack on every channel, watched by the plain UKF."""
    base = {
        "duration": 20.0,
        "attack": {"channels": [0, 1, 2, 3, 4, 5], "start_time": 5.0},
        "strategy": "ukf-only",
        "seed": 3,
    }
    return _merge(base, overrides)


@pytest.fixture
def scenario_factory():
    return short_scenario
