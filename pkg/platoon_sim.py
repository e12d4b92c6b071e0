#!/usr/bin/env python3
"""
============================================================
编队资源分配仿真 - 命令行入口
============================================================

功能：
    analytic         计算解析碰撞概率表（ρ × p 网格）
    simulate         单点蒙特卡洛仿真（随机选择 或 DRL）
    sweep            按扫描规格跑完整网格，输出对照报告
    export-sensing   生成并导出 PL / 最后队员的感知矩阵
    replay           在导出的感知矩阵上离线评估 PL 策略

使用方法：
    cd platoon_sim
    python platoon_sim.py analytic
    python platoon_sim.py simulate --algo drl --rho 60 --keep-prob 0.7 --runs 5
    python platoon_sim.py sweep --spec sweep.json --threads 8
    python platoon_sim.py export-sensing --rho 100 --periods 2000
    python platoon_sim.py replay --pl data/sensing/pl_x.csv --last-pm data/sensing/last_pm_x.csv --algo random

任意一个点失败时退出码为 1。
============================================================
"""

import sys
import os
import argparse
import json
import logging
from dataclasses import replace
from datetime import datetime

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np

from config.settings import LOG_DIR, RESULTS_DIR, SENSING_DIR, MODEL_DIR
from src.errors import ConfigurationError, DomainError
from src.scenario import ScenarioConfig, n_virtual_blocks
from src.analytic import analytic_table, relative_n_a_gap, analytic_inputs
from src.sps_sim import export_run, load_sensing_csv
from src.agents import DrlHyperParams, QApproximator, make_agent, replay_on_dataset
from src.harness import (
    SweepSpec, load_sweep_document, analytic_result, run_point, run_sweep,
    comparison_report, robustness_spread, emit_results, binomial_stderr,
)

logger = logging.getLogger(__name__)


def setup_logging(command: str):
    """日志同时写文件和终端，文件名按子命令和日期区分"""
    os.makedirs(LOG_DIR, exist_ok=True)
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s [%(levelname)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        handlers=[
            logging.FileHandler(os.path.join(LOG_DIR, f"{command}_{datetime.now().strftime('%Y%m%d')}.log"),
                                encoding='utf-8'),
            logging.StreamHandler()
        ]
    )


# ============================================================
# 参数
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="场景配置 JSON（字段名与 ScenarioConfig 相同）")
    common.add_argument("--hyper", help="DRL 超参数 JSON（字段名与 DrlHyperParams 相同）")
    common.add_argument("--rho", type=float, help="车辆密度 ρ（辆/km）")
    common.add_argument("--keep-prob", type=float, help="资源保持概率 p")
    common.add_argument("--seed", type=int, help="主随机种子")
    common.add_argument("--periods", type=int, help="每次运行的传输周期数")
    common.add_argument("--runs", type=int, help="每个点的独立运行次数")
    common.add_argument("--out-dir", help="输出目录")
    common.add_argument("--threads", type=int, help="并行进程数（默认 CPU 数）")
    common.add_argument("--pl-visible", action="store_true", default=None,
                        help="广播车辆能感知到 PL 的发送")
    common.add_argument("--exact-n-a", action="store_true", help="解析模型用求和形式的 N_a")
    common.add_argument("--masked-target", action="store_true", default=None,
                        help="TD 目标只在下一周期的 idle 集合里取 max")
    common.add_argument("--persist-weights", action="store_true", default=None,
                        help="同一点的多次运行之间沿用网络参数")
    common.add_argument("--grad-clip", type=float, help="梯度全局范数裁剪阈值（0 表示不裁剪）")

    parser = argparse.ArgumentParser(description="NR-V2X 编队 Mode-2 资源分配仿真")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", parents=[common], help="解析碰撞概率表")
    p.add_argument("--spec", help="扫描规格 JSON（只用其中的 densities / keep_probs）")

    p = sub.add_parser("simulate", parents=[common], help="单点仿真")
    p.add_argument("--algo", choices=["random", "drl"], required=True)
    p.add_argument("--model-out", help="保存最后一次运行的 Q 网络")
    p.add_argument("--curve", help="DRL 训练曲线 CSV")

    p = sub.add_parser("sweep", parents=[common], help="参数扫描")
    p.add_argument("--spec", required=True, help="扫描规格 JSON，或上一次输出的 results.json")
    p.add_argument("--curve-dir", help="为每个 DRL 点写训练曲线")

    p = sub.add_parser("export-sensing", parents=[common], help="导出感知矩阵")
    p.add_argument("--run-index", type=int, default=0, help="第几次运行（决定随机数流）")

    p = sub.add_parser("replay", parents=[common], help="在感知矩阵上离线评估")
    p.add_argument("--pl", required=True, help="PL 感知矩阵 CSV")
    p.add_argument("--last-pm", required=True, help="最后队员感知矩阵 CSV")
    p.add_argument("--algo", choices=["random", "drl"], required=True)
    p.add_argument("--model-in", help="DRL 从已保存的 Q 网络开始")
    return parser


def scenario_from_args(args) -> ScenarioConfig:
    base = ScenarioConfig.from_json(args.config) if args.config else ScenarioConfig()
    return base.with_overrides(
        density_rho=args.rho, keep_prob=args.keep_prob, seed=args.seed,
        periods_per_run=args.periods, runs_per_point=args.runs,
        pl_visible_to_sps=args.pl_visible,
    )


def hyper_from_args(args, base: DrlHyperParams = None) -> DrlHyperParams:
    if args.hyper:
        with open(args.hyper, "r", encoding="utf-8") as f:
            base = DrlHyperParams.from_dict(json.load(f))
    hyper = base or DrlHyperParams()
    changes = {}
    if args.masked_target is not None:
        changes["masked_target"] = True
    if args.persist_weights is not None:
        changes["persist_weights"] = True
    if args.grad_clip is not None:
        changes["grad_clip_norm"] = args.grad_clip
    return replace(hyper, **changes) if changes else hyper


def print_report(report):
    print("\n" + "=" * 60)
    print("📊 碰撞概率对照 P_c^ht")
    print("=" * 60)
    if report.empty:
        print("  （没有成功的点）")
    else:
        print(report.to_string(index=False, float_format=lambda x: f"{x:.5f}"))
    print("=" * 60)


# ============================================================
# 子命令
# ============================================================

def cmd_analytic(args) -> int:
    cfg = scenario_from_args(args)
    if args.spec:
        spec, _, _ = load_sweep_document(args.spec, cfg)
        densities, keep_probs = spec.densities, spec.keep_probs
    else:
        spec = SweepSpec()
        densities = [args.rho] if args.rho is not None else spec.densities
        keep_probs = [args.keep_prob] if args.keep_prob is not None else spec.keep_probs

    table = analytic_table(cfg, densities, keep_probs, exact_n_a=args.exact_n_a)
    out_dir = args.out_dir or RESULTS_DIR
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "analytic.csv")
    table.to_csv(path, index=False)
    logger.info(f"  保存: {path} ({len(table)} 行)")

    print("\n" + "=" * 60)
    print(f"📐 解析模型 | N_r = {n_virtual_blocks(cfg)}, T_s = {cfg.sps_periods}")
    print("=" * 60)
    print(table.to_string(index=False, float_format=lambda x: f"{x:.5f}"))
    gap = relative_n_a_gap(analytic_inputs(cfg))
    print(f"\n  ρ={cfg.density_rho:g}, p={cfg.keep_prob:g} 时 N_a 近似的相对误差: {gap:.2e}")
    return 0


def cmd_simulate(args) -> int:
    cfg = scenario_from_args(args)
    hyper = hyper_from_args(args)
    model_out = args.model_out
    if model_out is None and args.algo == "drl":
        model_out = os.path.join(MODEL_DIR, f"q_rho{cfg.density_rho:g}_p{cfg.keep_prob:g}.bin")

    result = run_point(cfg, args.algo, hyper, curve_path=args.curve, model_path=model_out,
                       exact_n_a=args.exact_n_a)
    results = [analytic_result(cfg, args.exact_n_a), result]
    spec = SweepSpec(densities=(cfg.density_rho,), keep_probs=(cfg.keep_prob,),
                     algorithms=("analytic", args.algo), runs_per_point=cfg.runs_per_point,
                     periods_per_run=cfg.periods_per_run)
    report = comparison_report(results)
    emit_results(results, args.out_dir or RESULTS_DIR, spec, cfg, hyper, report)
    print_report(report)

    if result.failed:
        print(f"❌ 仿真失败: {result.error}")
        return 1
    print(f"✅ {args.algo}: {result.collisions} / {result.periods * result.runs} 个周期碰撞")
    return 0


def cmd_sweep(args) -> int:
    spec, cfg, hyper = load_sweep_document(args.spec, scenario_from_args(args))
    # 命令行参数优先于文件
    cfg = cfg.with_overrides(seed=args.seed, pl_visible_to_sps=args.pl_visible)
    if args.runs is not None or args.periods is not None:
        spec = replace(spec, runs_per_point=args.runs or spec.runs_per_point,
                       periods_per_run=args.periods or spec.periods_per_run)
    hyper = hyper_from_args(args, hyper)

    results = run_sweep(spec, cfg, hyper, threads=args.threads, curve_dir=args.curve_dir,
                        exact_n_a=args.exact_n_a)
    report = comparison_report(results)
    emit_results(results, args.out_dir or RESULTS_DIR, spec, cfg, hyper, report)
    print_report(report)

    spread = robustness_spread(report)
    if not spread.empty:
        print("\n  不同 p 之间的极差（越小越稳健）:")
        print(spread.to_string(index=False, float_format=lambda x: f"{x:.5f}"))

    failed = [r for r in results if r.failed]
    if failed:
        print(f"\n🚨 {len(failed)} 个点失败:")
        for r in failed:
            print(f"  ρ={r.rho:g}, p={r.p:g}, {r.algorithm}: {r.error}")
        return 1
    print("\n✅ 扫描完成")
    return 0


def cmd_export_sensing(args) -> int:
    cfg = scenario_from_args(args)
    pl_path, pm_path = export_run(cfg, args.run_index, args.out_dir or SENSING_DIR)
    print(f"✅ 已导出:\n  {pl_path}\n  {pm_path}")
    return 0


def cmd_replay(args) -> int:
    cfg = scenario_from_args(args)
    hyper = hyper_from_args(args)
    pl = load_sensing_csv(args.pl)
    pm = load_sensing_csv(args.last_pm)
    rng = np.random.default_rng(cfg.seed)

    q = QApproximator.load(args.model_in) if args.model_in else None
    agent = make_agent(args.algo, pl.n_vrb, hyper, rng, q=q)
    flags = replay_on_dataset(pl, pm, agent)

    start = cfg.warmup_periods
    if args.algo == "drl":
        start = max(start, flags.size // 2)
    if start >= flags.size:
        raise ConfigurationError(f"矩阵只有 {pl.n_periods} 行，去掉预热 {start} 个周期后没有可统计的周期")
    measured = flags[start:]
    rate = float(measured.mean())
    print("\n" + "=" * 60)
    print(f"🔁 离线评估 | {args.algo} | {pl.n_periods} 行 × {pl.n_vrb} 个 VRB")
    print("=" * 60)
    print(f"  统计周期: {start} ~ {flags.size}")
    print(f"  P_c^ht ≈ {rate:.5f} ± {binomial_stderr(int(measured.sum()), measured.size):.5f}")
    print(f"  全程碰撞率: {flags.mean():.5f}")
    return 0


COMMANDS = {
    "analytic": cmd_analytic,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "export-sensing": cmd_export_sensing,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.command.replace("-", "_"))
    logger.info("=" * 50)
    logger.info(f"开始: {args.command}")
    logger.info("=" * 50)
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, DomainError) as e:
        logger.error(f"配置错误: {e}")
        print(f"❌ 配置错误: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
