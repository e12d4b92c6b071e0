"""
============================================================
随机选择算法的碰撞概率解析模型
============================================================

符号：
    N_r  每个传输周期的 VRB 数
    R    通信距离（km），ρ 车辆密度（辆/km），d 编队长度（km）
    p    资源保持概率，T_s 半持续周期长度

PL 通信范围内平均有 K = 2Rρ−1 辆车，隐藏终端平均 dρ 辆。
K、dρ 按实数参与计算；非整数 K 时二项系数用广义二项系数。

使用方法：
    from src.analytic.collision_model import AnalyticInputs, evaluate
    out = evaluate(AnalyticInputs(n_r=200, R=0.4, rho=100, d=0.1, p=0.9, T_s=10))
============================================================
"""

import logging
from dataclasses import asdict, dataclass
from typing import Iterable, List

import numpy as np
import pandas as pd
from scipy.special import binom

from src.errors import DomainError
from src.scenario.topology import ScenarioConfig, n_virtual_blocks

logger = logging.getLogger(__name__)


def _snap(x: float) -> float:
    """把浮点误差造成的 79.00000000000001 这类值还原成整数"""
    r = round(x)
    return float(r) if abs(x - r) < 1e-9 else float(x)


@dataclass(frozen=True)
class AnalyticInputs:
    n_r: int
    R: float
    rho: float
    d: float
    p: float
    T_s: int

    def __post_init__(self):
        if self.n_r < 2:
            raise DomainError(f"N_r 至少为 2: {self.n_r}")
        if 2 * self.R * self.rho < 1 - 1e-12:
            raise DomainError(f"通信范围内至少要有 PL 自己: 2Rρ={2 * self.R * self.rho}")
        if not self.n_r > self.R_rho:
            raise DomainError(f"要求 N_r > Rρ: N_r={self.n_r}, Rρ={self.R_rho}")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"p 必须在 [0,1]: {self.p}")
        if self.T_s < 1:
            raise DomainError(f"T_s 至少为 1: {self.T_s}")
        if self.d < 0:
            raise DomainError(f"编队长度不能为负: {self.d}")

    @property
    def in_range(self) -> float:
        """PL 通信范围内的平均车辆数 2Rρ−1"""
        return _snap(2 * self.R * self.rho - 1)

    @property
    def hidden(self) -> float:
        """隐藏终端平均数 dρ"""
        return _snap(self.d * self.rho)

    @property
    def R_rho(self) -> float:
        return _snap(self.R * self.rho)

    @property
    def reselect_prob(self) -> float:
        """单辆车在某个周期换资源的概率 (1−p)/T_s"""
        return (1.0 - self.p) / self.T_s

    @classmethod
    def from_scenario(cls, cfg: ScenarioConfig) -> "AnalyticInputs":
        return cls(n_r=n_virtual_blocks(cfg), R=cfg.transmission_range_km, rho=cfg.density_rho,
                   d=cfg.platoon_length_km, p=cfg.keep_prob, T_s=cfg.sps_periods)


@dataclass(frozen=True)
class AnalyticOutputs:
    N_a: float
    P_c_rs: float
    P_one_ht: float
    P_c_ht: float


# ============================================================
# 各个公式
# ============================================================

def p_reselect(n: int, inputs: AnalyticInputs) -> float:
    """通信范围内恰好 n 辆车在同一周期换资源的概率（二项分布）"""
    K = inputs.in_range
    if n < 0 or n > round(K):
        raise DomainError(f"n 超出范围 [0, {round(K)}]: {n}")
    q = inputs.reselect_prob
    return float(binom(K, n) * q ** n * (1.0 - q) ** (K - n))


def n_a_exact(inputs: AnalyticInputs) -> float:
    """N_a 的求和形式：Σ_{h=0}^{N_r−2} [1 − (1 − 1/N_r)^K]^h，0^0 = 1"""
    x = 1.0 - (1.0 - 1.0 / inputs.n_r) ** inputs.in_range
    h = np.arange(inputs.n_r - 1)
    return float(np.sum(np.power(x, h)))


def n_a_approx(inputs: AnalyticInputs) -> float:
    """N_r 足够大时的近似：(1 − 1/N_r)^(−K)"""
    return float((1.0 - 1.0 / inputs.n_r) ** (-inputs.in_range))


def _n_a(inputs: AnalyticInputs, exact: bool) -> float:
    return n_a_exact(inputs) if exact else n_a_approx(inputs)


def p_collision_rs_sum(inputs: AnalyticInputs, exact_n_a: bool = False) -> float:
    """资源选择碰撞概率的求和形式 Σ_{n≥1} P_r(n)·[1 − ((N_r−N_a)/N_r)^n]"""
    N_a = _n_a(inputs, exact_n_a)
    miss = (inputs.n_r - N_a) / inputs.n_r
    total = 0.0
    for n in range(1, int(round(inputs.in_range)) + 1):
        total += p_reselect(n, inputs) * (1.0 - miss ** n)
    return total


def p_collision_rs_closed(inputs: AnalyticInputs, exact_n_a: bool = False) -> float:
    """资源选择碰撞概率的闭式 1 − [1 − (1−p)N_a/(T_s N_r)]^K"""
    N_a = _n_a(inputs, exact_n_a)
    hit = (1.0 - inputs.p) * N_a / (inputs.T_s * inputs.n_r)
    if hit > 1.0:
        raise DomainError(f"(1−p)N_a/(T_s N_r) = {hit} > 1")
    return float(1.0 - (1.0 - hit) ** inputs.in_range)


def p_one_hidden(inputs: AnalyticInputs) -> float:
    """单个隐藏终端不撞 PL 的概率 (N_r − Rρ − 1)/(N_r − Rρ)"""
    free = inputs.n_r - inputs.R_rho
    if free <= 0:
        raise DomainError(f"要求 N_r > Rρ: N_r={inputs.n_r}, Rρ={inputs.R_rho}")
    return float((free - 1.0) / free)


def p_collision_ht(inputs: AnalyticInputs, exact_n_a: bool = False) -> float:
    """考虑隐藏终端后的碰撞概率 1 − (1 − P_c^rs)·(P_one^ht)^(dρ)"""
    rs = p_collision_rs_closed(inputs, exact_n_a)
    return float(1.0 - (1.0 - rs) * p_one_hidden(inputs) ** inputs.hidden)


def evaluate(inputs: AnalyticInputs, exact_n_a: bool = False) -> AnalyticOutputs:
    out = AnalyticOutputs(
        N_a=_n_a(inputs, exact_n_a),
        P_c_rs=p_collision_rs_closed(inputs, exact_n_a),
        P_one_ht=p_one_hidden(inputs),
        P_c_ht=p_collision_ht(inputs, exact_n_a),
    )
    for name in ("P_c_rs", "P_one_ht", "P_c_ht"):
        value = getattr(out, name)
        if not 0.0 <= value <= 1.0:
            raise DomainError(f"{name} 不在 [0,1]: {value}")
    return out


# ============================================================
# 扫描表
# ============================================================

def analytic_table(base: ScenarioConfig, densities: Iterable[float],
                   keep_probs: Iterable[float], exact_n_a: bool = False) -> pd.DataFrame:
    """
    按 (ρ, p) 网格计算解析值

    返回:
        DataFrame，列为 rho, p, N_a, P_c_rs, P_one_ht, P_c_ht
    """
    rows: List[dict] = []
    for rho in densities:
        for p in keep_probs:
            inputs = AnalyticInputs.from_scenario(
                base.with_overrides(density_rho=float(rho), keep_prob=float(p)))
            out = evaluate(inputs, exact_n_a)
            rows.append({"rho": float(rho), "p": float(p), **asdict(out)})
    logger.debug(f"解析表: {len(rows)} 个点")
    return pd.DataFrame(rows, columns=["rho", "p", "N_a", "P_c_rs", "P_one_ht", "P_c_ht"])


def relative_n_a_gap(inputs: AnalyticInputs) -> float:
    """|N_a(求和) − N_a(近似)| / N_a(求和)"""
    exact = n_a_exact(inputs)
    return abs(exact - n_a_approx(inputs)) / exact


def analytic_inputs(cfg: ScenarioConfig) -> AnalyticInputs:
    """场景配置 → 解析模型输入（N_r 按资源池公式计算）"""
    return AnalyticInputs.from_scenario(cfg)
