"""
============================================================
在录好的感知矩阵上离线评估 PL 策略
============================================================

先生成 PL 与最后队员的感知矩阵，再在数据上跑随机选择或 DRL。
第 n 个周期：PL 依据第 n−1 行 PL 感知选 VRB；
若该 VRB 在第 n 行的 PL 感知或最后队员感知中为 busy，则记为碰撞。
============================================================
"""

import logging
from typing import Optional, Union

import numpy as np

from src.agents.baseline import RandomSelectionAgent
from src.agents.dqn_agent import DrlAgent, DrlHyperParams, make_agent
from src.sps_sim.world import ACK, NACK, SensingMatrix

logger = logging.getLogger(__name__)

Agent = Union[RandomSelectionAgent, DrlAgent]


def replay_on_dataset(pl_matrix: SensingMatrix, last_pm_matrix: SensingMatrix,
                      algorithm: Union[str, Agent], hyper: Optional[DrlHyperParams] = None,
                      rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    参数:
        pl_matrix / last_pm_matrix: 内存约定（1=busy）的感知矩阵，行数相同
        algorithm: "random" / "drl"，或者已经建好的 agent
        hyper / rng: 按名字新建 agent 时使用

    返回:
        长度为 行数−1 的碰撞标记数组
    """
    pl = pl_matrix.rows
    pm = last_pm_matrix.rows
    if pl.shape != pm.shape:
        raise ValueError(f"两个感知矩阵形状不同: {pl.shape} vs {pm.shape}")

    if isinstance(algorithm, str):
        agent = make_agent(algorithm, pl.shape[1], hyper or DrlHyperParams(),
                           rng if rng is not None else np.random.default_rng())
    else:
        agent = algorithm

    flags = np.zeros(pl.shape[0] - 1, dtype=bool)
    for n in range(1, pl.shape[0]):
        action = agent.act(pl[n - 1])
        collided = bool(pl[n, action] or pm[n, action])
        flags[n - 1] = collided
        agent.observe(NACK if collided else ACK, pl[n])
    logger.info(f"离线评估 {agent.name}: {int(flags.sum())} / {flags.size} 次碰撞")
    return flags
