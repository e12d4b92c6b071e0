"""
============================================================
感知矩阵的生成与导出
============================================================

只跑广播车辆的 SPS 世界（PL 不发送），逐周期记录 PL 和最后队员
看到的感知结果，得到两个 periods × N_r 的矩阵。

第 0 行是初始分配（第一个周期之前）的感知结果，之后每行对应一个周期。

CSV 格式：
    第一行是以 # 开头的说明（包含 1=idle, 0=busy 约定）
    之后每行一个周期，N_r 个逗号分隔的 0/1
注意文件里 1 = idle，和内存里 1 = busy 相反。
============================================================
"""

import logging
import os
from typing import Tuple

import numpy as np
import pandas as pd

from src.scenario.topology import (
    STREAM_SPS, ScenarioConfig, build_topology, run_stream,
)
from src.sps_sim.world import LAST_PM, SensingMatrix, init_world

logger = logging.getLogger(__name__)

HEADER_PREFIX = "# sensing matrix"


def record_sensing(cfg: ScenarioConfig, run_index: int) -> Tuple[SensingMatrix, SensingMatrix]:
    """
    生成一次运行的 PL / 最后队员感知矩阵

    和在线仿真使用同一套随机数流，所以同一 (cfg, run_index) 下
    广播车辆的行为与在线仿真一致（pl_visible_to_sps 关闭时）。
    """
    topo = build_topology(cfg, run_index)
    world = init_world(topo, cfg, run_stream(cfg, run_index, STREAM_SPS))

    n_rows = cfg.periods_per_run
    pl_rows = np.zeros((n_rows, world.n_r), dtype=np.uint8)
    pm_rows = np.zeros((n_rows, world.n_r), dtype=np.uint8)

    view = world.view()
    pl_rows[0] = view.pl
    pm_rows[0] = view.last_pm
    for n in range(1, n_rows):
        _, view = world.step_period()
        pl_rows[n] = view.pl
        pm_rows[n] = view.last_pm

    if world.saturation_events:
        logger.info(f"重选时感知全忙 {world.saturation_events} 次（保持原 VRB）")
    return (SensingMatrix(rows=pl_rows, owner=topo.pl_index),
            SensingMatrix(rows=pm_rows, owner=LAST_PM))


def export_sensing_csv(matrix: SensingMatrix, path: str):
    """写出感知矩阵（文件中 1=idle, 0=busy）"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    idle = 1 - matrix.rows.astype(np.uint8)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"{HEADER_PREFIX} owner={matrix.owner} periods={matrix.n_periods} "
                f"n_r={matrix.n_vrb} convention: 1=idle 0=busy\n")
        pd.DataFrame(idle).to_csv(f, header=False, index=False)
    logger.info(f"  保存: {path} ({matrix.n_periods} 行)")


def load_sensing_csv(path: str) -> SensingMatrix:
    """读回导出的感知矩阵，恢复为内存约定（1=busy）"""
    owner = "unknown"
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
    if first.startswith(HEADER_PREFIX):
        for token in first.split():
            if token.startswith("owner="):
                value = token.split("=", 1)[1]
                owner = int(value) if value.isdigit() else value
    idle = pd.read_csv(path, comment="#", header=None).to_numpy(dtype=np.uint8)
    return SensingMatrix(rows=(1 - idle).astype(np.uint8), owner=owner)


def export_run(cfg: ScenarioConfig, run_index: int, out_dir: str) -> Tuple[str, str]:
    """生成并写出一次运行的两个矩阵，返回文件路径"""
    pl, pm = record_sensing(cfg, run_index)
    tag = f"rho{cfg.density_rho:g}_p{cfg.keep_prob:g}_run{run_index}"
    pl_path = os.path.join(out_dir, f"pl_{tag}.csv")
    pm_path = os.path.join(out_dir, f"last_pm_{tag}.csv")
    export_sensing_csv(pl, pl_path)
    export_sensing_csv(pm, pm_path)
    return pl_path, pm_path
