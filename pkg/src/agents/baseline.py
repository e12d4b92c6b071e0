"""
============================================================
随机选择基线
============================================================

PL 每个周期从上一周期感知为 idle 的 VRB 里均匀随机选一个。
感知全忙时沿用上一周期的 VRB，并累加饱和计数。
============================================================
"""

import logging
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)


def idle_action_set(sensing_row_prev: np.ndarray) -> np.ndarray:
    """上一周期感知为 idle（0）的 VRB 下标，升序，可能为空"""
    return np.flatnonzero(np.asarray(sensing_row_prev) == 0)


def random_select(idle_set: np.ndarray, rng: np.random.Generator) -> Optional[int]:
    """在 idle 集合里均匀选一个；集合为空返回 None，由调用方处理"""
    if len(idle_set) == 0:
        return None
    return int(idle_set[rng.integers(len(idle_set))])


class RandomSelectionAgent:
    """
    随机选择策略，接口与 DrlAgent 相同：
        act(上一周期感知行) → VRB
        observe(反馈, 本周期感知行)
    """

    name = "random"

    def __init__(self, n_r: int, rng: np.random.Generator):
        self.n_r = n_r
        self.rng = rng
        self.last_action: Optional[int] = None
        self.saturation_events = 0

    def fallback_action(self) -> int:
        """idle 集合为空：重复上一周期的 VRB（第一个周期则在全部 VRB 中随机）"""
        self.saturation_events += 1
        if self.last_action is None:
            return int(self.rng.integers(self.n_r))
        return self.last_action

    def act(self, sensing_row_prev: np.ndarray) -> int:
        action = random_select(idle_action_set(sensing_row_prev), self.rng)
        if action is None:
            action = self.fallback_action()
        self.last_action = action
        return action

    def observe(self, observation: str, sensing_row: np.ndarray) -> Optional[float]:
        return None
