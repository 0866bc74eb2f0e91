from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crewload.env import EnvConfig
from crewload.perfmodel import PerformanceModel

settings.register_profile(
    "suite", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("suite")


@pytest.fixture
def model() -> PerformanceModel:
    return PerformanceModel()


@pytest.fixture
def env_config() -> EnvConfig:
    return EnvConfig()


class TwoArmedBandit:
    """One-step test environment: arm 0 pays 1.0, arm 1 pays 0.0."""

    n_actions = 2
    obs_dim = 1

    def __init__(self) -> None:
        self._obs = np.array([1.0])

    def reset(self, seed: int | None = None) -> np.ndarray:
        return self._obs

    def step(self, action_index: int):
        reward = 1.0 if action_index == 0 else 0.0
        return self._obs, reward, True, {}


@pytest.fixture
def bandit_factory():
    return TwoArmedBandit
