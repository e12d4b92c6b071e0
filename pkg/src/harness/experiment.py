"""
============================================================
实验编排：单点多次运行、参数扫描
============================================================

一个"点"= (ρ, p, 算法)。每个点跑 runs_per_point 次独立运行，
每次运行的撒点 / SPS / 智能体随机数流都由 (主种子, ρ, p, 运行序号) 派生，
所以结果与执行顺序、并行度无关；随机选择和 DRL 在同一点上看到的
广播世界完全相同。

统计窗口：
    random  去掉开头 2·T_s 个周期的预热
    drl     只统计后 50% 的周期（同时给出预热之后的全程碰撞率）
============================================================
"""

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import settings
from src.agents.dqn_agent import DrlHyperParams, append_training_curve, drl_episode_step, make_agent
from src.agents.q_network import QApproximator
from src.analytic.collision_model import AnalyticInputs, evaluate
from src.errors import ConfigurationError, DomainError
from src.scenario.topology import (
    STREAM_AGENT, STREAM_SPS, ScenarioConfig, build_topology, run_stream,
)
from src.sps_sim.world import init_world

logger = logging.getLogger(__name__)

ALGORITHMS = ("random", "drl", "analytic")


@dataclass
class ExperimentResult:
    rho: float
    p: float
    algorithm: str
    runs: int
    periods: int
    collisions: int
    p_c_ht_estimate: float
    stderr: float
    seed: int
    wall_time_s: float
    warmup_periods: int = 0
    full_periods: int = 0
    full_collisions: int = 0
    saturation_events: int = 0
    failed: bool = False
    error: str = ""

    @classmethod
    def from_dict(cls, data: Dict) -> "ExperimentResult":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True)
class SweepSpec:
    densities: Tuple[float, ...] = tuple(settings.DENSITIES)
    keep_probs: Tuple[float, ...] = tuple(settings.KEEP_PROBS)
    algorithms: Tuple[str, ...] = ("analytic", "random", "drl")
    runs_per_point: int = settings.RUNS_PER_POINT
    periods_per_run: int = settings.PERIODS_PER_RUN

    def __post_init__(self):
        object.__setattr__(self, "densities", tuple(float(r) for r in self.densities))
        object.__setattr__(self, "keep_probs", tuple(float(p) for p in self.keep_probs))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if not self.densities or not self.keep_probs or not self.algorithms:
            raise ConfigurationError("扫描的 densities / keep_probs / algorithms 都不能为空")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ConfigurationError(f"未知算法: {sorted(unknown)}")
        if self.runs_per_point < 1 or self.periods_per_run < 1:
            raise ConfigurationError("runs_per_point / periods_per_run 必须为正")

    def validate(self, base: ScenarioConfig):
        """每个点都要是合法的场景，且满足解析模型的定义域"""
        for cfg in self.point_configs(base):
            try:
                AnalyticInputs.from_scenario(cfg)
            except DomainError as e:
                raise ConfigurationError(f"ρ={cfg.density_rho} 不满足解析模型的前提: {e}") from e

    def point_configs(self, base: ScenarioConfig) -> List[ScenarioConfig]:
        return [base.with_overrides(density_rho=rho, keep_prob=p,
                                    runs_per_point=self.runs_per_point,
                                    periods_per_run=self.periods_per_run)
                for rho in self.densities for p in self.keep_probs]

    @classmethod
    def from_dict(cls, data: Dict) -> "SweepSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"未知的扫描字段: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> Dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def load_sweep_document(path: str, base: Optional[ScenarioConfig] = None
                        ) -> Tuple[SweepSpec, ScenarioConfig, DrlHyperParams]:
    """
    读扫描规格文件

    可以是只含 SweepSpec 字段的文件，也可以是 emit_results 写出的 results.json
    （含 "sweep" / "scenario" / "hyper" 三段），后者可以原样复现整次扫描。
    """
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if "sweep" in doc:
        spec = SweepSpec.from_dict(doc["sweep"])
        cfg = ScenarioConfig.from_dict(doc["scenario"]) if "scenario" in doc else (base or ScenarioConfig())
        hyper = DrlHyperParams.from_dict(doc["hyper"]) if "hyper" in doc else DrlHyperParams()
    else:
        spec = SweepSpec.from_dict(doc)
        cfg = base or ScenarioConfig()
        hyper = DrlHyperParams()
    return spec, cfg, hyper


# ============================================================
# 单次运行
# ============================================================

def measurement_window(cfg: ScenarioConfig, algorithm: str) -> Tuple[int, int]:
    """[start, end) 统计窗口"""
    start = cfg.warmup_periods
    if algorithm == "drl":
        start = max(start, cfg.periods_per_run // 2)
    end = cfg.periods_per_run
    if start >= end:
        raise ConfigurationError(
            f"没有可统计的周期: periods_per_run={cfg.periods_per_run}, 预热={cfg.warmup_periods}")
    return start, end


@dataclass
class RunRecord:
    collisions: np.ndarray
    saturation_events: int
    agent: object = field(repr=False, default=None)


def run_single(cfg: ScenarioConfig, algorithm: str, run_index: int,
               hyper: Optional[DrlHyperParams] = None,
               q: Optional[QApproximator] = None) -> RunRecord:
    """一次完整运行：撒点 → 初始化世界 → 逐周期推进，返回每个周期是否碰撞"""
    hyper = hyper or DrlHyperParams()
    topo = build_topology(cfg, run_index)
    world = init_world(topo, cfg, run_stream(cfg, run_index, STREAM_SPS))
    agent = make_agent(algorithm, world.n_r, hyper, run_stream(cfg, run_index, STREAM_AGENT), q=q)

    flags = np.zeros(cfg.periods_per_run, dtype=bool)
    view = world.view()
    for n in range(cfg.periods_per_run):
        outcome, view = drl_episode_step(world, agent, view)
        flags[n] = outcome.collided

    saturation = world.saturation_events + agent.saturation_events
    if saturation:
        logger.info(f"  运行 {run_index}: 感知全忙 {saturation} 次"
                    f"（广播 {world.saturation_events}, PL {agent.saturation_events}）")
    return RunRecord(collisions=flags, saturation_events=saturation, agent=agent)


def binomial_stderr(collisions: int, trials: int) -> float:
    if trials <= 0:
        return float("nan")
    rate = collisions / trials
    return math.sqrt(rate * (1.0 - rate) / trials)


# ============================================================
# 单点
# ============================================================

def analytic_result(cfg: ScenarioConfig, exact_n_a: bool = False) -> ExperimentResult:
    out = evaluate(AnalyticInputs.from_scenario(cfg), exact_n_a)
    return ExperimentResult(rho=cfg.density_rho, p=cfg.keep_prob, algorithm="analytic",
                            runs=0, periods=0, collisions=0, p_c_ht_estimate=out.P_c_ht,
                            stderr=0.0, seed=cfg.seed, wall_time_s=0.0)


def run_point(cfg: ScenarioConfig, algorithm: str, hyper: Optional[DrlHyperParams] = None,
              curve_path: Optional[str] = None, model_path: Optional[str] = None,
              exact_n_a: bool = False) -> ExperimentResult:
    """
    跑一个 (ρ, p, 算法) 点

    任何一次运行出错都会把这个点标记为 failed 并记录错误，不向外抛出，
    配置错误（比如没有可统计的周期）除外。
    """
    if algorithm == "analytic":
        return analytic_result(cfg, exact_n_a)

    hyper = hyper or DrlHyperParams()
    start, end = measurement_window(cfg, algorithm)
    warmup = cfg.warmup_periods
    t0 = time.time()
    logger.info(f"开始: ρ={cfg.density_rho:g}, p={cfg.keep_prob:g}, {algorithm}, "
                f"{cfg.runs_per_point} 次 × {cfg.periods_per_run} 周期")

    collisions = full_collisions = saturation = 0
    q: Optional[QApproximator] = None
    try:
        for run_index in range(cfg.runs_per_point):
            record = run_single(cfg, algorithm, run_index, hyper,
                                q=q if hyper.persist_weights else None)
            collisions += int(record.collisions[start:end].sum())
            full_collisions += int(record.collisions[warmup:].sum())
            saturation += record.saturation_events
            if algorithm == "drl":
                q = record.agent.q
                if curve_path:
                    append_training_curve(record.agent.training_curve(), curve_path, run_index)
        if model_path and q is not None:
            q.save(model_path, hyper.to_dict())
    except Exception as e:
        logger.error(f"失败: ρ={cfg.density_rho:g}, p={cfg.keep_prob:g}, {algorithm}: {e}")
        return ExperimentResult(rho=cfg.density_rho, p=cfg.keep_prob, algorithm=algorithm,
                                runs=cfg.runs_per_point, periods=end - start, collisions=0,
                                p_c_ht_estimate=float("nan"), stderr=float("nan"), seed=cfg.seed,
                                wall_time_s=time.time() - t0, warmup_periods=warmup,
                                failed=True, error=f"{type(e).__name__}: {e}")

    measured = (end - start) * cfg.runs_per_point
    estimate = collisions / measured
    result = ExperimentResult(
        rho=cfg.density_rho, p=cfg.keep_prob, algorithm=algorithm, runs=cfg.runs_per_point,
        periods=end - start, collisions=collisions, p_c_ht_estimate=estimate,
        stderr=binomial_stderr(collisions, measured), seed=cfg.seed,
        wall_time_s=time.time() - t0, warmup_periods=warmup,
        full_periods=cfg.periods_per_run - warmup, full_collisions=full_collisions,
        saturation_events=saturation,
    )
    logger.info(f"完成: ρ={cfg.density_rho:g}, p={cfg.keep_prob:g}, {algorithm}: "
                f"P_c^ht ≈ {estimate:.5f} ± {result.stderr:.5f} ({result.wall_time_s:.1f}s)")
    return result


def _point_task(args) -> ExperimentResult:
    cfg_dict, algorithm, hyper_dict, curve_path, exact_n_a = args
    return run_point(ScenarioConfig.from_dict(cfg_dict), algorithm,
                     DrlHyperParams.from_dict(hyper_dict), curve_path=curve_path,
                     exact_n_a=exact_n_a)


# ============================================================
# 扫描
# ============================================================

def run_sweep(spec: SweepSpec, base: ScenarioConfig, hyper: Optional[DrlHyperParams] = None,
              threads: Optional[int] = None, curve_dir: Optional[str] = None,
              exact_n_a: bool = False) -> List[ExperimentResult]:
    """
    按 ρ → p → 算法 的顺序跑完整个网格，结果顺序固定

    参数:
        threads: 并行进程数，默认等于 CPU 数；1 表示串行
        curve_dir: 给出时为每个 DRL 点写训练曲线
    """
    hyper = hyper or DrlHyperParams()
    spec.validate(base)
    tasks = []
    for cfg in spec.point_configs(base):
        for algorithm in spec.algorithms:
            curve_path = None
            if curve_dir and algorithm == "drl":
                curve_path = os.path.join(
                    curve_dir, f"curve_rho{cfg.density_rho:g}_p{cfg.keep_prob:g}.csv")
            tasks.append((cfg.to_dict(), algorithm, hyper.to_dict(), curve_path, exact_n_a))

    workers = threads or os.cpu_count() or 1
    logger.info(f"扫描 {len(tasks)} 个点, 并行度 {workers}")
    if workers <= 1:
        return [_point_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_point_task, tasks))
