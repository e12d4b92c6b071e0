"""
============================================================
结果汇总与输出
============================================================

输出三个文件：
    results.csv   每个 (ρ, p, 算法) 一行，列固定
    results.json  同样的结果 + 场景配置、超参数、扫描规格、种子和版本
    report.csv    解析值 / 随机选择 / DRL 三者对照，以及 DRL 相对随机选择的降幅
============================================================
"""

import json
import logging
import os
from dataclasses import asdict
from datetime import datetime
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

import src
from src.agents.dqn_agent import DrlHyperParams
from src.harness.experiment import ExperimentResult, SweepSpec, measurement_window
from src.scenario.topology import ScenarioConfig

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["rho", "p", "algorithm", "runs", "periods", "collisions",
                  "p_c_ht", "stderr", "seed", "wall_time_s"]

REPORT_COLUMNS = ["rho", "p", "analytic", "random", "random_stderr", "drl", "drl_stderr", "reduction"]


def results_frame(results: List[ExperimentResult]) -> pd.DataFrame:
    rows = [{
        "rho": r.rho, "p": r.p, "algorithm": r.algorithm, "runs": r.runs,
        "periods": r.periods, "collisions": r.collisions, "p_c_ht": r.p_c_ht_estimate,
        "stderr": r.stderr, "seed": r.seed, "wall_time_s": round(r.wall_time_s, 3),
    } for r in results]
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def comparison_report(results: List[ExperimentResult]) -> pd.DataFrame:
    """
    按 (ρ, p) 把三种算法并排

    reduction = 1 − drl / random，缺少任一方时为 NaN。失败的点不参与。
    """
    ok = [r for r in results if not r.failed]
    if not ok:
        return pd.DataFrame(columns=REPORT_COLUMNS)
    df = pd.DataFrame([{"rho": r.rho, "p": r.p, "algorithm": r.algorithm,
                        "value": r.p_c_ht_estimate, "stderr": r.stderr} for r in ok])
    value = df.pivot_table(index=["rho", "p"], columns="algorithm", values="value", aggfunc="first")
    err = df.pivot_table(index=["rho", "p"], columns="algorithm", values="stderr", aggfunc="first")

    report = pd.DataFrame(index=value.index)
    for alg in ("analytic", "random", "drl"):
        report[alg] = value[alg] if alg in value else np.nan
    report["random_stderr"] = err["random"] if "random" in err else np.nan
    report["drl_stderr"] = err["drl"] if "drl" in err else np.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        report["reduction"] = np.where(report["random"] > 0,
                                       1.0 - report["drl"] / report["random"], np.nan)
    report = report.reset_index().sort_values(["rho", "p"], ascending=[True, False])
    return report[REPORT_COLUMNS].reset_index(drop=True)


def robustness_spread(report: pd.DataFrame) -> pd.DataFrame:
    """
    每个 ρ 下，随机选择与 DRL 在不同 p 之间的极差

    极差越小说明该策略对广播车辆的保持概率越不敏感。
    """
    rows = []
    for rho, group in report.groupby("rho", sort=True):
        row = {"rho": rho}
        for alg in ("random", "drl"):
            values = group[alg].dropna()
            row[f"{alg}_spread"] = float(values.max() - values.min()) if len(values) else np.nan
        rows.append(row)
    return pd.DataFrame(rows, columns=["rho", "random_spread", "drl_spread"])


def _measurement_windows(cfg: ScenarioConfig, spec: SweepSpec) -> Dict:
    point = cfg.with_overrides(periods_per_run=spec.periods_per_run)
    windows = {}
    for alg in spec.algorithms:
        if alg != "analytic":
            start, end = measurement_window(point, alg)
            windows[alg] = [start, end]
    return windows


def emit_results(results: List[ExperimentResult], out_dir: str, spec: SweepSpec,
                 cfg: ScenarioConfig, hyper: DrlHyperParams,
                 report: Optional[pd.DataFrame] = None) -> Dict[str, str]:
    """
    写出 results.csv / results.json / report.csv

    返回:
        {"csv": ..., "json": ..., "report": ...} 三个文件路径
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, "results.csv"),
        "json": os.path.join(out_dir, "results.json"),
        "report": os.path.join(out_dir, "report.csv"),
    }

    results_frame(results).to_csv(paths["csv"], index=False)

    doc = {
        "generated_at": datetime.now().isoformat(timespec="seconds"),
        "code_version": src.__version__,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "warmup_periods": cfg.warmup_periods,
        "measurement_windows": _measurement_windows(cfg, spec),
        "sweep": spec.to_dict(),
        "scenario": cfg.to_dict(),
        "hyper": hyper.to_dict(),
        "results": [asdict(r) for r in results],
    }
    with open(paths["json"], "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, ensure_ascii=False, default=float)

    if report is None:
        report = comparison_report(results)
    report.to_csv(paths["report"], index=False)

    failed = [r for r in results if r.failed]
    logger.info(f"  保存: {paths['csv']} ({len(results)} 行, 失败 {len(failed)})")
    logger.info(f"  保存: {paths['json']}")
    logger.info(f"  保存: {paths['report']}")
    return paths


def load_results(path: str) -> List[ExperimentResult]:
    """读回 results.json 里的结果列表"""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    return [ExperimentResult.from_dict(r) for r in doc.get("results", [])]
