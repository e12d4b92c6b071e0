import itertools

import numpy as np
import pytest

from config import settings
from src.analytic import (
    AnalyticInputs, analytic_inputs, analytic_table, evaluate, n_a_approx, n_a_exact,
    p_collision_ht, p_collision_rs_closed, p_collision_rs_sum, p_one_hidden, p_reselect,
    relative_n_a_gap,
)
from src.errors import DomainError
from src.scenario import ScenarioConfig


def inputs(rho, p=0.9, n_r=200, d=0.1):
    return AnalyticInputs(n_r=n_r, R=0.4, rho=rho, d=d, p=p, T_s=10)


TABLE_GRID = [(rho, p) for rho in settings.DENSITIES for p in settings.KEEP_PROBS]


def occupied_run_length(n_r, k):
    """
    k 辆车独立均匀选 VRB 时，PL 所选 VRB 之后连续被占用的期望长度（含所选 VRB 本身）

    P(指定的 h 个 VRB 全被占用) 用“已覆盖个数”的马尔可夫链逐辆车递推。
    """
    total = 0.0
    for h in range(n_r - 1):
        dist = np.zeros(h + 1)
        dist[0] = 1.0
        for _ in range(k):
            hit = (h - np.arange(h + 1)) / n_r
            moved = dist * hit
            dist = dist - moved
            dist[1:] += moved[:-1]
        total += dist[h]
        if dist[h] < 1e-15:
            break
    return total


class TestReselectionPmf:

    @pytest.mark.parametrize("rho,p", TABLE_GRID)
    def test_pmf_sums_to_one(self, rho, p):
        x = inputs(rho, p)
        total = sum(p_reselect(n, x) for n in range(int(round(x.in_range)) + 1))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_no_reselection_at_low_density(self):
        assert p_reselect(0, inputs(20)) == pytest.approx(0.99 ** 15, rel=1e-12)
        assert p_reselect(0, inputs(20)) == pytest.approx(0.8601, abs=1e-4)

    def test_out_of_range_count(self):
        with pytest.raises(DomainError):
            p_reselect(16, inputs(20))


class TestAvailableResources:

    def test_known_values(self):
        assert n_a_exact(inputs(20)) == pytest.approx(1.078, abs=1e-3)
        assert n_a_approx(inputs(100)) == pytest.approx(1.486, abs=1e-3)

    @pytest.mark.parametrize("rho", settings.DENSITIES)
    def test_approximation_within_one_percent(self, rho):
        assert relative_n_a_gap(inputs(rho)) < 0.01

    @pytest.mark.parametrize("n_r,k", [(4, 1), (5, 2), (6, 3), (8, 2), (7, 4)])
    def test_independence_sum_overstates_occupied_run(self, n_r, k):
        # 枚举 k 辆车的全部分配，数 PL 选中 VRB 0 之后连续被占用的 VRB 个数
        runs = []
        for assignment in itertools.product(range(n_r), repeat=k):
            taken = set(assignment)
            h = 1
            while h <= n_r - 2 and all(m in taken for m in range(1, h + 1)):
                h += 1
            runs.append(h)
        enumerated = float(np.mean(runs))
        assert enumerated == pytest.approx(occupied_run_length(n_r, k), abs=1e-12)

        x = AnalyticInputs(n_r=n_r, R=0.5, rho=k + 1, d=0.0, p=0.5, T_s=1)
        assert x.in_range == k
        # 求和形式把各 VRB 的占用当成独立事件，玩具规模下偏大 3%~8%
        assert n_a_exact(x) >= enumerated
        assert (n_a_exact(x) - enumerated) / enumerated < 0.1

    def test_one_vehicle_four_vrbs(self):
        assert occupied_run_length(4, 1) == pytest.approx(1.25)
        x = AnalyticInputs(n_r=4, R=0.5, rho=2, d=0.0, p=0.5, T_s=1)
        assert n_a_exact(x) == pytest.approx(1.3125)

    @pytest.mark.parametrize("rho", settings.DENSITIES)
    def test_independence_gap_is_small_at_table_sizes(self, rho):
        x = inputs(rho)
        exact_run = occupied_run_length(x.n_r, int(round(x.in_range)))
        assert abs(n_a_exact(x) - exact_run) / exact_run < 0.01


class TestCollisionProbability:

    @pytest.mark.parametrize("rho,p", TABLE_GRID)
    def test_sum_equals_closed_form(self, rho, p):
        x = inputs(rho, p)
        assert p_collision_rs_sum(x) == pytest.approx(p_collision_rs_closed(x), abs=1e-12)

    def test_known_values(self):
        assert p_collision_rs_sum(inputs(20)) == pytest.approx(8.1e-4, rel=0.01)
        assert p_collision_rs_closed(inputs(200, p=0.5)) == pytest.approx(0.084, rel=0.02)
        assert p_collision_ht(inputs(100)) == pytest.approx(0.066, rel=0.01)
        assert p_collision_ht(inputs(200, p=0.5)) == pytest.approx(0.226, rel=0.01)

    def test_hidden_terminal_term(self):
        assert p_one_hidden(inputs(100)) == pytest.approx(159 / 160)

    def test_no_platoon_means_no_hidden_terminals(self):
        x = inputs(100, d=0.0)
        assert p_collision_ht(x) == pytest.approx(p_collision_rs_closed(x), abs=1e-15)

    @pytest.mark.parametrize("rho", settings.DENSITIES)
    def test_lower_keep_probability_collides_more(self, rho):
        values = [p_collision_ht(inputs(rho, p)) for p in (0.9, 0.7, 0.5)]
        assert values[0] < values[1] < values[2]

    def test_collision_grows_with_density(self):
        values = [p_collision_ht(inputs(rho)) for rho in settings.DENSITIES]
        assert np.all(np.diff(values) > 0)

    def test_non_integer_neighbour_count(self):
        x = AnalyticInputs(n_r=200, R=0.4, rho=21.0, d=0.1, p=0.9, T_s=10)
        assert x.in_range == pytest.approx(15.8)
        out = evaluate(x)
        assert 0.0 < out.P_c_ht < 1.0

    @pytest.mark.parametrize("kwargs", [
        {"n_r": 1, "R": 0.4, "rho": 20, "d": 0.1, "p": 0.9, "T_s": 10},
        {"n_r": 200, "R": 0.4, "rho": 1, "d": 0.1, "p": 0.9, "T_s": 10},
        {"n_r": 40, "R": 0.4, "rho": 100, "d": 0.1, "p": 0.9, "T_s": 10},
        {"n_r": 200, "R": 0.4, "rho": 20, "d": 0.1, "p": 1.2, "T_s": 10},
        {"n_r": 200, "R": 0.4, "rho": 20, "d": 0.1, "p": 0.9, "T_s": 0},
    ])
    def test_domain_violations(self, kwargs):
        with pytest.raises(DomainError):
            AnalyticInputs(**kwargs)


class TestTable:

    def test_table_covers_grid(self):
        table = analytic_table(ScenarioConfig(), settings.DENSITIES, settings.KEEP_PROBS)
        assert list(table.columns) == ["rho", "p", "N_a", "P_c_rs", "P_one_ht", "P_c_ht"]
        assert len(table) == len(TABLE_GRID)
        row = table[(table.rho == 100) & (table.p == 0.9)].iloc[0]
        assert row.P_c_ht == pytest.approx(0.066, rel=0.01)

    def test_scenario_mapping(self):
        x = analytic_inputs(ScenarioConfig(density_rho=60.0, keep_prob=0.7))
        assert (x.n_r, x.rho, x.p, x.T_s) == (200, 60.0, 0.7, 10)

    def test_exact_n_a_variant_is_close(self):
        cfg = ScenarioConfig()
        a = evaluate(analytic_inputs(cfg), exact_n_a=False)
        b = evaluate(analytic_inputs(cfg), exact_n_a=True)
        assert a.P_c_ht == pytest.approx(b.P_c_ht, rel=0.01)
