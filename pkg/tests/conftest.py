import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.scenario import ScenarioConfig  # noqa: E402
from src.agents import DrlHyperParams  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="运行耗时的蒙特卡洛验收测试")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 耗时的蒙特卡洛测试，需要 --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="需要 --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_cfg():
    """N_r = 20 的小场景，ρ=30 → 120 辆车"""
    return ScenarioConfig(period_ms=5.0, density_rho=30.0, periods_per_run=120,
                          runs_per_point=2, seed=7)


@pytest.fixture
def tiny_hyper():
    """缩小的网络，训练快"""
    return DrlHyperParams(history_length=6, conv_channels=(2, 4), hidden_units=(16, 8),
                          memory_size=50, decay_interval_periods=20)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
