"""
============================================================
SPS 广播世界：逐个传输周期推进
============================================================

每个周期按顺序：
1. 半持续周期到期的广播车辆做 SPS 重选（依据自己上一周期的感知结果）
2. 所有车辆在当前 VRB 上发送
3. 按需计算任意车辆 / 最后队员的感知行
4. 判定 PL 这一周期是否被干扰集合里的车辆撞上

感知行约定：内存里 1 = busy，0 = idle。自己的发送不出现在自己的感知行里。
PL 的发送对最后队员是有用信号，不算 busy；对广播车辆只有在
pl_visible_to_sps 打开时才可见。
============================================================
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Set, Union

import numpy as np

from src.scenario.topology import (
    ScenarioConfig, Topology, interferer_windows, last_pm_window,
    n_virtual_blocks, sensing_neighbors,
)

logger = logging.getLogger(__name__)

# 反馈取值
ACK = "ACK"
NACK = "NACK"

# 感知行的拥有者：车辆下标，或者虚拟的最后队员
LAST_PM = "last_pm"

Owner = Union[int, str]


@dataclass
class SpsVehicleState:
    """单辆广播车辆的 SPS 状态"""
    current_vrb: int
    periods_remaining: int
    phase_offset: int


@dataclass
class SensingMatrix:
    """某个观察者逐周期的感知结果（1 = busy）"""
    rows: np.ndarray
    owner: Owner

    @property
    def n_periods(self) -> int:
        return int(self.rows.shape[0])

    @property
    def n_vrb(self) -> int:
        return int(self.rows.shape[1])


@dataclass
class PeriodOutcome:
    """PL 在一个周期里的发送结果"""
    pl_vrb: int
    colliders: Set[int] = field(default_factory=set)

    @property
    def collided(self) -> bool:
        return bool(self.colliders)


# ============================================================
# SPS 重选
# ============================================================

def closest_idle_vrb(current: int, idle_mask: np.ndarray) -> Optional[int]:
    """
    从当前 VRB 往后（循环）找最近的 idle VRB

    距离从 1 开始，当前 VRB 本身不算候选。没有 idle VRB 时返回 None。
    """
    n_r = idle_mask.shape[0]
    order = (current + 1 + np.arange(n_r - 1)) % n_r
    hits = np.flatnonzero(idle_mask[order])
    if hits.size == 0:
        return None
    return int(order[hits[0]])


def sps_reselect(vstate: SpsVehicleState, own_sensing_row_prev: Optional[np.ndarray],
                 keep_prob: float, sps_periods: int,
                 rng: Optional[np.random.Generator] = None,
                 keep: Optional[bool] = None) -> SpsVehicleState:
    """
    半持续周期到期时的重选

    以概率 p 保持当前 VRB，否则换到最近的 idle VRB；
    感知全忙时保持不变。计数器重置为 T_s。

    参数:
        keep: 已经抽好的保持决定（世界按批抽取）；为 None 时用 rng 抽一次
        own_sensing_row_prev: 只在换 VRB 时读取，保持时可以为 None
    """
    if keep is None:
        keep = rng.random() < keep_prob
    vrb = vstate.current_vrb
    if not keep:
        candidate = closest_idle_vrb(vrb, np.asarray(own_sensing_row_prev) == 0)
        if candidate is None:
            logger.debug(f"重选时感知全忙，保持 VRB {vrb}")
        else:
            vrb = candidate
    return SpsVehicleState(current_vrb=vrb, periods_remaining=sps_periods,
                           phase_offset=vstate.phase_offset)


def feedback(outcome: PeriodOutcome) -> str:
    """最后队员的 HARQ 反馈：被撞则 NACK，同周期无差错送达 PL"""
    return NACK if outcome.collided else ACK


# ============================================================
# 世界
# ============================================================

class SensingView:
    """某一周期结束时全部车辆发送情况的快照，按需给出任何观察者的感知行"""

    def __init__(self, world: "SpsWorld", vrb: np.ndarray):
        self._world = world
        self._vrb = vrb

    def row(self, owner: Owner) -> np.ndarray:
        return self._world._busy_row(self._vrb, owner)

    @property
    def pl(self) -> np.ndarray:
        return self.row(self._world.topo.pl_index)

    @property
    def last_pm(self) -> np.ndarray:
        return self.row(LAST_PM)


class SpsWorld:
    """
    一次运行的广播世界

    车辆状态按数组保存；PL 占一个下标，但不参与 SPS，
    它的 VRB 由外部策略每周期通过 set_pl_vrb 给出。
    """

    def __init__(self, topo: Topology, cfg: ScenarioConfig, rng: np.random.Generator):
        self.topo = topo
        self.cfg = cfg
        self.rng = rng
        self.n_r = n_virtual_blocks(cfg)
        n = topo.n_vehicles
        self.pl_index = topo.pl_index

        self.broadcast = np.ones(n, dtype=bool)
        self.broadcast[self.pl_index] = False

        self.vrb = rng.integers(0, self.n_r, size=n).astype(np.int64)
        self.phase_offset = rng.integers(0, cfg.sps_periods, size=n).astype(np.int64)
        self.periods_remaining = self.phase_offset.copy()
        # PL 还没有选择
        self.vrb[self.pl_index] = -1
        self.periods_remaining[self.pl_index] = 0

        self.nbr_lo, self.nbr_hi = sensing_neighbors(topo, cfg)
        self.interferer_windows = interferer_windows(topo, cfg)
        self.pm_lo, self.pm_hi = last_pm_window(topo, cfg)
        # 最近一个周期实际发送的 VRB（初始分配视为第 0 个周期之前的发送）
        self.last_tx = self.vrb.copy()

        self.period = 0
        self.saturation_events = 0
        self.reselection_events = 0
        self.keep_events = 0

    # ------------------------------------------------------------
    # 感知
    # ------------------------------------------------------------

    def _busy_row(self, vrb: np.ndarray, owner: Owner) -> np.ndarray:
        if isinstance(owner, str):
            if owner != LAST_PM:
                raise ValueError(f"未知的观察者: {owner}")
            lo, hi = self.pm_lo, self.pm_hi
            exclude = [self.pl_index]
        else:
            owner = int(owner)
            lo, hi = int(self.nbr_lo[owner]), int(self.nbr_hi[owner])
            exclude = [owner]
            if owner != self.pl_index and not self.cfg.pl_visible_to_sps:
                exclude.append(self.pl_index)

        seg = vrb[lo:hi]
        counts = np.bincount(seg[seg >= 0], minlength=self.n_r)
        for v in exclude:
            if lo <= v < hi and vrb[v] >= 0:
                counts[vrb[v]] -= 1
        return (counts > 0).astype(np.uint8)

    def sensing_row(self, owner: Owner) -> np.ndarray:
        """最近一个周期（或初始分配）的感知行"""
        return self._busy_row(self.last_tx, owner)

    def view(self) -> SensingView:
        return SensingView(self, self.last_tx)

    def vehicle_state(self, v: int) -> SpsVehicleState:
        return SpsVehicleState(current_vrb=int(self.vrb[v]),
                               periods_remaining=int(self.periods_remaining[v]),
                               phase_offset=int(self.phase_offset[v]))

    # ------------------------------------------------------------
    # 推进
    # ------------------------------------------------------------

    def set_pl_vrb(self, vrb: Optional[int]):
        if vrb is None:
            self.vrb[self.pl_index] = -1
            return
        if not 0 <= vrb < self.n_r:
            raise ValueError(f"PL 的 VRB 越界: {vrb}")
        self.vrb[self.pl_index] = int(vrb)

    def _reselect(self):
        due = np.flatnonzero(self.broadcast & (self.periods_remaining == 0))
        if due.size:
            prev = self.last_tx
            keep = self.rng.random(due.size) < self.cfg.keep_prob
            self.keep_events += int(keep.sum())
            self.reselection_events += int((~keep).sum())
            for v, kept in zip(due.tolist(), keep.tolist()):
                before = self.vehicle_state(v)
                row = None if kept else self._busy_row(prev, v)
                after = sps_reselect(before, row, self.cfg.keep_prob, self.cfg.sps_periods,
                                     keep=kept)
                if not kept and after.current_vrb == before.current_vrb:
                    self.saturation_events += 1
                self.vrb[v] = after.current_vrb
                self.periods_remaining[v] = after.periods_remaining
        self.periods_remaining[self.broadcast] -= 1

    def _score_pl(self) -> Optional[PeriodOutcome]:
        pl_vrb = int(self.vrb[self.pl_index])
        if pl_vrb < 0:
            return None
        colliders = set()
        for lo, hi in self.interferer_windows:
            hits = np.flatnonzero(self.vrb[lo:hi] == pl_vrb) + lo
            colliders.update(int(v) for v in hits)
        colliders.discard(self.pl_index)
        return PeriodOutcome(pl_vrb=pl_vrb, colliders=colliders)

    def step_period(self):
        """
        推进一个传输周期

        返回:
            (PeriodOutcome 或 None（PL 本周期不发送）, SensingView)
        """
        self._reselect()
        outcome = self._score_pl()
        self.last_tx = self.vrb.copy()
        self.period += 1
        return outcome, self.view()


def init_world(topo: Topology, cfg: ScenarioConfig, rng: np.random.Generator) -> SpsWorld:
    """初始分配：每辆广播车辆独立均匀地选 VRB 和相位，周期计数为 0"""
    return SpsWorld(topo, cfg, rng)


def occupied_fraction(world: SpsWorld, owners: Iterable[Owner]) -> List[float]:
    """若干观察者感知到的 busy VRB 比例"""
    return [float(world.sensing_row(o).mean()) for o in owners]
