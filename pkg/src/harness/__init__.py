# 实验编排与结果输出模块
from .experiment import (
    ALGORITHMS, ExperimentResult, SweepSpec, RunRecord, load_sweep_document,
    measurement_window, run_single, run_point, run_sweep, analytic_result, binomial_stderr,
)
from .report import (
    RESULT_COLUMNS, REPORT_COLUMNS, results_frame, comparison_report, robustness_spread,
    emit_results, load_results,
)
