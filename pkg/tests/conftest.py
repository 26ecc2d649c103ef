"""
Shared fixtures for the sparse_jt tests.
"""

import numpy as np
import pytest

from sparse_jt.config import NetworkConfig, preset
from sparse_jt.fronthaul import plan_quantization
from sparse_jt.se_metrics import draw_realization


@pytest.fixture
def small_cfg() -> NetworkConfig:
    """(L, N, K) = (4, 2, 3) scenario."""
    return preset("small")


@pytest.fixture
def small_plan(small_cfg):
    return plan_quantization(small_cfg)


@pytest.fixture
def small_channels(small_cfg, small_plan):
    """Full channel set of drop 0, fade 0."""
    _, channels = draw_realization(small_cfg, small_plan, seed=11, drop=0, fade=0)
    return channels


@pytest.fixture
def small_csit(small_channels):
    return small_channels.csit()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
