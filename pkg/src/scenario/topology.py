"""
============================================================
静态一维场景
============================================================

负责搭建仿真里"不会变"的部分：
- 场景参数 ScenarioConfig（道路、距离、资源池、SPS、运行规模）
- 车辆撒点、编队队长 (PL) 与最后一个队员 (last PM) 的位置
- 干扰集合与每辆车的感知邻居窗口
- 每次运行的随机数流

车辆都是静止的，位置升序排列，所以"距离 R 以内的车辆"
总是一个连续的下标区间，用二分查找即可得到。
============================================================
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from config import settings
from src.errors import ConfigurationError

logger = logging.getLogger(__name__)

# 每次运行内部按用途拆分的随机数流
STREAM_PLACEMENT = 0
STREAM_SPS = 1
STREAM_AGENT = 2


@dataclass(frozen=True)
class ScenarioConfig:
    """一个参数点的完整场景配置（道路、资源池、SPS 参数 + 种子 + 运行长度）"""

    road_length_km: float = settings.ROAD_LENGTH_KM
    transmission_range_km: float = settings.TRANSMISSION_RANGE_KM
    density_rho: float = settings.DEFAULT_DENSITY
    platoon_length_km: float = settings.PLATOON_LENGTH_KM
    period_ms: float = settings.PERIOD_MS
    subchannels: int = settings.SUBCHANNELS
    slot_ms: float = settings.SLOT_MS
    sps_periods: int = settings.SPS_PERIODS
    keep_prob: float = settings.KEEP_PROB
    periods_per_run: int = settings.PERIODS_PER_RUN
    runs_per_point: int = settings.RUNS_PER_POINT
    seed: int = settings.DEFAULT_SEED
    # 广播车辆是否能感知到 PL 的发送
    pl_visible_to_sps: bool = False

    def __post_init__(self):
        R = self.transmission_range_km
        d = self.platoon_length_km
        if R <= 0 or d < 0:
            raise ConfigurationError(f"距离参数不合法: R={R}, d={d}")
        if self.road_length_km <= 2 * (R + d):
            raise ConfigurationError(
                f"道路太短: road_length_km={self.road_length_km} 必须大于 2(R+d)={2 * (R + d)}"
            )
        if not self.density_rho > 0:
            raise ConfigurationError(f"车辆密度必须为正: {self.density_rho}")
        if not 0.0 <= self.keep_prob <= 1.0:
            raise ConfigurationError(f"资源保持概率必须在 [0,1]: {self.keep_prob}")
        if self.sps_periods < 1:
            raise ConfigurationError(f"T_s 至少为 1: {self.sps_periods}")
        if self.subchannels < 1:
            raise ConfigurationError(f"子信道数至少为 1: {self.subchannels}")
        if self.periods_per_run < 1 or self.runs_per_point < 1:
            raise ConfigurationError(
                f"运行规模不合法: periods={self.periods_per_run}, runs={self.runs_per_point}"
            )
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError(f"种子必须是 64 位无符号整数: {self.seed}")
        # 触发 N_r 的整除检查
        n_virtual_blocks(self)

    @property
    def warmup_periods(self) -> int:
        """每次运行开头不计入统计的周期数（2·T_s）"""
        return 2 * self.sps_periods

    # ------------------------------------------------------------
    # JSON / 覆盖
    # ------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"未知的配置字段: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        # 允许 sweep 规格文件里把场景放在 "scenario" 键下
        if "scenario" in data and isinstance(data["scenario"], dict):
            data = data["scenario"]
        return cls.from_dict(data)

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_json(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    def with_overrides(self, **overrides) -> "ScenarioConfig":
        """命令行参数覆盖单个字段，值为 None 的参数忽略"""
        changes = {k: v for k, v in overrides.items() if v is not None}
        if not changes:
            return self
        known = {f.name for f in fields(self)}
        unknown = set(changes) - known
        if unknown:
            raise ConfigurationError(f"未知的配置字段: {sorted(unknown)}")
        return replace(self, **changes)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class Topology:
    """车辆位置（升序）与编队几何"""

    positions: np.ndarray
    pl_index: int
    last_pm_position: float
    n_vehicles: int = field(init=False)

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=float)
        positions.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "n_vehicles", int(positions.size))

    @property
    def pl_position(self) -> float:
        return float(self.positions[self.pl_index])


# ============================================================
# 资源池
# ============================================================

def n_virtual_blocks(cfg: ScenarioConfig) -> int:
    """
    每个传输周期内的 VRB 数：N_r = T_tr · n_r / t_s

    用有理数计算，结果不是整数时报配置错误。
    """
    period = Fraction(str(cfg.period_ms))
    slot = Fraction(str(cfg.slot_ms))
    if slot <= 0 or period <= 0:
        raise ConfigurationError(f"时长必须为正: T_tr={cfg.period_ms}, t_s={cfg.slot_ms}")
    n_r = period * cfg.subchannels / slot
    if n_r.denominator != 1:
        raise ConfigurationError(
            f"T_tr·n_r/t_s 不是整数: {cfg.period_ms}·{cfg.subchannels}/{cfg.slot_ms} = {float(n_r)}"
        )
    return int(n_r)


# ============================================================
# 随机数流
# ============================================================

def point_key(cfg: ScenarioConfig) -> Tuple[int, int]:
    """参数点标识，只由 (ρ, p) 决定，与执行顺序无关"""
    return int(round(cfg.density_rho * 1000)), int(round(cfg.keep_prob * 1000))


def run_stream(cfg: ScenarioConfig, run_index: int, purpose: int) -> np.random.Generator:
    """
    由 (主种子, 参数点, 运行序号, 用途) 派生独立的随机数流

    同一参数点下随机选择与 DRL 使用相同的撒点与 SPS 流，便于成对比较。
    """
    seq = np.random.SeedSequence(cfg.seed, spawn_key=(*point_key(cfg), run_index, purpose))
    return np.random.default_rng(seq)


# ============================================================
# 撒点与邻居
# ============================================================

def place_vehicles(cfg: ScenarioConfig, rng: np.random.Generator) -> Topology:
    """
    在 [0, road_length_km] 上均匀撒 ⌊L·ρ⌋ 辆车，离道路中点最近的车作为 PL

    参数:
        cfg: 场景配置
        rng: 撒点用的随机数流（见 run_stream）

    返回:
        Topology
    """
    n = int(math.floor(cfg.road_length_km * cfg.density_rho + 1e-9))
    if n <= 0:
        raise ConfigurationError(
            f"道路上没有车辆: road_length_km={cfg.road_length_km}, rho={cfg.density_rho}"
        )
    positions = np.sort(rng.uniform(0.0, cfg.road_length_km, size=n))
    pl_index = int(np.argmin(np.abs(positions - cfg.road_length_km / 2)))
    last_pm = float(positions[pl_index] + cfg.platoon_length_km)
    return Topology(positions=positions, pl_index=pl_index, last_pm_position=last_pm)


def window(topo: Topology, lower_km: float, upper_km: float) -> Tuple[int, int]:
    """位置落在 [lower_km, upper_km] 内的车辆下标区间 [lo, hi)"""
    lo = int(np.searchsorted(topo.positions, lower_km, side="left"))
    hi = int(np.searchsorted(topo.positions, upper_km, side="right"))
    return lo, hi


def interferer_windows(topo: Topology, cfg: ScenarioConfig) -> List[Tuple[int, int]]:
    """
    PL 感知范围与最后队员感知范围的并集

    d <= 2R 时两段相连，就是 [pos(PL)−R, pos(PL)+d+R]；否则返回两个区间。
    """
    R = cfg.transmission_range_km
    if cfg.platoon_length_km <= 2 * R:
        return [window(topo, topo.pl_position - R, topo.last_pm_position + R)]
    return [window(topo, topo.pl_position - R, topo.pl_position + R),
            last_pm_window(topo, cfg)]


def interferer_set(topo: Topology, cfg: ScenarioConfig) -> Set[int]:
    """会与 PL 发生碰撞的车辆集合（不含 PL 本身）"""
    members = set()
    for lo, hi in interferer_windows(topo, cfg):
        members.update(range(lo, hi))
    members.discard(topo.pl_index)
    return members


def sensing_neighbors(topo: Topology, cfg: ScenarioConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    每辆车距离 R 以内的车辆窗口

    返回:
        (lo, hi) 两个数组，车辆 v 的邻居是下标 lo[v] <= u < hi[v]（含 v 自己）
    """
    R = cfg.transmission_range_km
    lo = np.searchsorted(topo.positions, topo.positions - R, side="left")
    hi = np.searchsorted(topo.positions, topo.positions + R, side="right")
    return lo.astype(np.int64), hi.astype(np.int64)


def last_pm_window(topo: Topology, cfg: ScenarioConfig) -> Tuple[int, int]:
    """最后一个队员距离 R 以内的车辆窗口"""
    R = cfg.transmission_range_km
    return window(topo, topo.last_pm_position - R, topo.last_pm_position + R)


def build_topology(cfg: ScenarioConfig, run_index: int,
                   rng: Optional[np.random.Generator] = None) -> Topology:
    """按 (cfg, 运行序号) 生成拓扑，是二者的纯函数"""
    if rng is None:
        rng = run_stream(cfg, run_index, STREAM_PLACEMENT)
    topo = place_vehicles(cfg, rng)
    logger.debug(f"撒点完成: {topo.n_vehicles} 辆车, PL 位于 {topo.pl_position:.3f} km")
    return topo
