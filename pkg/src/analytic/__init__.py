# 解析模型模块
from .collision_model import (
    AnalyticInputs, AnalyticOutputs, p_reselect, n_a_exact, n_a_approx,
    p_collision_rs_sum, p_collision_rs_closed, p_one_hidden, p_collision_ht,
    evaluate, analytic_table, relative_n_a_gap, analytic_inputs,
)
