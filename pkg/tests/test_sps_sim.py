import numpy as np
import pytest

from src.scenario import STREAM_SPS, ScenarioConfig, build_topology, run_stream
from src.sps_sim import (
    ACK, LAST_PM, NACK, PeriodOutcome, SpsVehicleState, closest_idle_vrb, export_run,
    export_sensing_csv, feedback, init_world, load_sensing_csv, record_sensing, sps_reselect,
)
from src.sps_sim.world import occupied_fraction


def make_world(cfg, run_index=0):
    topo = build_topology(cfg, run_index)
    return init_world(topo, cfg, run_stream(cfg, run_index, STREAM_SPS))


def brute_force_row(world, owner_pos, vrb, exclude):
    R = world.cfg.transmission_range_km
    row = np.zeros(world.n_r, dtype=np.uint8)
    for v, x in enumerate(world.topo.positions):
        if v in exclude or vrb[v] < 0:
            continue
        if abs(x - owner_pos) <= R:
            row[vrb[v]] = 1
    return row


class TestClosestIdle:

    def test_searches_forward(self):
        idle = np.array([False, False, True, False, True])
        assert closest_idle_vrb(0, idle) == 2
        assert closest_idle_vrb(2, idle) == 4

    def test_wraps_around(self):
        idle = np.array([True, False, False, False, False])
        assert closest_idle_vrb(3, idle) == 0

    def test_current_vrb_is_not_a_candidate(self):
        idle = np.array([False, True, False])
        assert closest_idle_vrb(1, idle) is None

    def test_all_busy(self):
        assert closest_idle_vrb(0, np.zeros(4, dtype=bool)) is None


class TestReselect:

    def test_keep_with_probability_one(self):
        state = SpsVehicleState(current_vrb=3, periods_remaining=0, phase_offset=2)
        out = sps_reselect(state, np.zeros(10), keep_prob=1.0, sps_periods=10,
                           rng=np.random.default_rng(0))
        assert out.current_vrb == 3
        assert out.periods_remaining == 10
        assert out.phase_offset == 2

    def test_moves_to_closest_idle(self):
        row = np.ones(10)
        row[7] = 0
        state = SpsVehicleState(current_vrb=3, periods_remaining=0, phase_offset=0)
        out = sps_reselect(state, row, keep_prob=0.0, sps_periods=10, rng=np.random.default_rng(0))
        assert out.current_vrb == 7

    def test_predrawn_keep_skips_sensing(self):
        state = SpsVehicleState(current_vrb=3, periods_remaining=0, phase_offset=1)
        out = sps_reselect(state, None, keep_prob=0.0, sps_periods=10, keep=True)
        assert out.current_vrb == 3
        assert out.periods_remaining == 10

    def test_saturated_row_keeps_vrb(self):
        state = SpsVehicleState(current_vrb=3, periods_remaining=0, phase_offset=0)
        out = sps_reselect(state, np.ones(10), keep_prob=0.0, sps_periods=10,
                           rng=np.random.default_rng(0))
        assert out.current_vrb == 3


class TestFeedback:

    def test_ack_nack(self):
        assert feedback(PeriodOutcome(pl_vrb=0)) == ACK
        assert feedback(PeriodOutcome(pl_vrb=0, colliders={5})) == NACK


class TestWorld:

    def test_initial_state(self, small_cfg):
        world = make_world(small_cfg)
        pl = world.pl_index
        assert world.vrb[pl] == -1
        others = np.flatnonzero(world.broadcast)
        assert np.all((world.vrb[others] >= 0) & (world.vrb[others] < world.n_r))
        assert np.all(world.periods_remaining[others] == world.phase_offset[others])
        assert np.all(world.phase_offset[others] < small_cfg.sps_periods)

    def test_sensing_rows_match_brute_force(self, small_cfg):
        world = make_world(small_cfg)
        world.set_pl_vrb(4)
        for _ in range(5):
            _, view = world.step_period()
        vrb = world.last_tx
        pl = world.pl_index
        pl_pos = world.topo.pl_position
        np.testing.assert_array_equal(view.pl, brute_force_row(world, pl_pos, vrb, {pl}))
        np.testing.assert_array_equal(
            view.last_pm, brute_force_row(world, world.topo.last_pm_position, vrb, {pl}))
        v = int(np.flatnonzero(world.broadcast)[10])
        np.testing.assert_array_equal(
            view.row(v), brute_force_row(world, world.topo.positions[v], vrb, {v, pl}))

    def test_pl_visible_to_broadcasters_when_enabled(self, small_cfg):
        cfg = small_cfg.with_overrides(pl_visible_to_sps=True)
        world = make_world(cfg)
        world.set_pl_vrb(4)
        _, view = world.step_period()
        pl = world.pl_index
        v = pl + 1
        np.testing.assert_array_equal(
            view.row(v), brute_force_row(world, world.topo.positions[v], world.last_tx, {v}))

    def test_collision_iff_interferer_shares_vrb(self, small_cfg):
        world = make_world(small_cfg)
        members = set()
        for lo, hi in world.interferer_windows:
            members.update(range(lo, hi))
        members.discard(world.pl_index)
        for n in range(30):
            world.set_pl_vrb(n % world.n_r)
            outcome, _ = world.step_period()
            expected = {v for v in members if world.vrb[v] == outcome.pl_vrb}
            assert outcome.colliders == expected

    def test_pl_not_sending_gives_no_outcome(self, small_cfg):
        world = make_world(small_cfg)
        outcome, _ = world.step_period()
        assert outcome is None

    def test_vrb_changes_only_when_due(self, small_cfg):
        cfg = small_cfg.with_overrides(keep_prob=0.0)
        world = make_world(cfg)
        for _ in range(25):
            before = world.vrb.copy()
            due = world.broadcast & (world.periods_remaining == 0)
            world.step_period()
            changed = np.flatnonzero(world.vrb != before)
            assert np.all(due[changed])

    def test_world_reselection_follows_sps_reselect(self, small_cfg):
        cfg = small_cfg.with_overrides(keep_prob=0.0)
        world = make_world(cfg)
        for _ in range(small_cfg.sps_periods):
            due = np.flatnonzero(world.broadcast & (world.periods_remaining == 0))
            expected = {}
            for v in due:
                state = SpsVehicleState(int(world.vrb[v]), 0, int(world.phase_offset[v]))
                out = sps_reselect(state, world.sensing_row(int(v)), 0.0, cfg.sps_periods,
                                   np.random.default_rng(0))
                expected[int(v)] = out.current_vrb
            world.step_period()
            assert {v: int(world.vrb[v]) for v in expected} == expected
            np.testing.assert_array_equal(world.periods_remaining[due], cfg.sps_periods - 1)

    def test_reselection_happens_once_per_sps_period(self, small_cfg):
        world = make_world(small_cfg)
        for _ in range(3 * small_cfg.sps_periods):
            world.step_period()
        n_broadcast = int(world.broadcast.sum())
        assert world.keep_events + world.reselection_events == 3 * n_broadcast

    def test_rejects_out_of_range_pl_vrb(self, small_cfg):
        world = make_world(small_cfg)
        with pytest.raises(ValueError):
            world.set_pl_vrb(world.n_r)

    def test_last_pm_busy_is_within_pl_or_pm_range(self, small_cfg):
        world = make_world(small_cfg)
        R = small_cfg.transmission_range_km
        for _ in range(10):
            _, view = world.step_period()
            pm_busy = set(np.flatnonzero(view.last_pm))
            near = {int(world.last_tx[v]) for v, x in enumerate(world.topo.positions)
                    if v != world.pl_index and abs(x - world.topo.last_pm_position) <= R}
            assert pm_busy <= set(np.flatnonzero(view.pl)) | near

    def test_initial_occupancy(self):
        # PL 周围平均 K = 2Rρ−1 辆车，约 1−(1−1/N_r)^K 的 VRB 被占用
        cfg = ScenarioConfig(density_rho=20.0)
        fractions = []
        for run in range(50):
            world = make_world(cfg, run)
            fractions.extend(occupied_fraction(world, [world.pl_index]))
        k = 2 * cfg.transmission_range_km * cfg.density_rho - 1
        expected = 1 - (1 - 1 / 200) ** k
        assert np.mean(fractions) == pytest.approx(expected, abs=0.05)


class TestSensingIO:

    def test_record_shapes_and_first_row(self, small_cfg):
        pl, pm = record_sensing(small_cfg, 0)
        assert pl.rows.shape == (small_cfg.periods_per_run, 20)
        assert pm.rows.shape == pl.rows.shape
        assert pm.owner == LAST_PM
        world = make_world(small_cfg)
        np.testing.assert_array_equal(pl.rows[0], world.view().pl)

    def test_csv_uses_idle_convention(self, small_cfg, tmp_path):
        pl, _ = record_sensing(small_cfg.with_overrides(periods_per_run=5), 0)
        path = tmp_path / "pl.csv"
        export_sensing_csv(pl, str(path))
        lines = path.read_text().splitlines()
        assert lines[0].startswith("#") and "1=idle" in lines[0]
        first = np.array([int(x) for x in lines[1].split(",")])
        np.testing.assert_array_equal(first, 1 - pl.rows[0])

        loaded = load_sensing_csv(str(path))
        np.testing.assert_array_equal(loaded.rows, pl.rows)
        assert loaded.owner == pl.owner

    def test_export_run_writes_both_files(self, small_cfg, tmp_path):
        pl_path, pm_path = export_run(small_cfg.with_overrides(periods_per_run=4), 1, str(tmp_path))
        assert load_sensing_csv(pl_path).n_periods == 4
        assert load_sensing_csv(pm_path).owner == LAST_PM


class TestForcedCases:

    def test_hidden_terminal_on_pl_vrb_collides(self, small_cfg):
        cfg = small_cfg.with_overrides(keep_prob=1.0)
        world = make_world(cfg)
        R, d = cfg.transmission_range_km, cfg.platoon_length_km
        pl_pos = world.topo.pl_position
        hidden = [v for v, x in enumerate(world.topo.positions) if pl_pos + R < x <= pl_pos + d + R]
        if not hidden:
            pytest.skip("这次撒点没有隐藏终端")
        v = hidden[0]
        world.vrb[v] = 3
        world.set_pl_vrb(3)
        outcome, _ = world.step_period()
        assert outcome.collided
        assert v in outcome.colliders
        assert feedback(outcome) == NACK

    def test_full_keep_freezes_assignment(self, small_cfg):
        world = make_world(small_cfg.with_overrides(keep_prob=1.0))
        initial = world.vrb.copy()
        for _ in range(3 * small_cfg.sps_periods):
            world.step_period()
        np.testing.assert_array_equal(world.vrb, initial)


class ScriptedKeeps:
    """按给定顺序返回保持 / 重选决定的假随机数流"""

    def __init__(self, decisions):
        self.decisions = list(decisions)

    def random(self, size):
        out = np.array([0.0 if self.decisions.pop(0) else 0.99 for _ in range(size)])
        return out


@pytest.mark.slow
def test_toy_world_matches_exhaustive_enumeration():
    cfg = ScenarioConfig(road_length_km=0.2, transmission_range_km=0.04, platoon_length_km=0.01,
                         density_rho=25.0, period_ms=2.0, subchannels=2, slot_ms=0.5,
                         sps_periods=2, keep_prob=0.5, periods_per_run=3, seed=3)
    topo = build_topology(cfg, 0)
    assert topo.n_vehicles == 5

    def fresh_world():
        world = init_world(topo, cfg, np.random.default_rng(11))
        world.set_pl_vrb(int(world.vrb[(world.pl_index + 1) % 5]))
        return world

    def collided_periods(world):
        total = 0
        for _ in range(cfg.periods_per_run):
            outcome, _ = world.step_period()
            total += int(outcome.collided)
        return total

    # 决策次数由相位决定，与决策结果无关
    probe = fresh_world()
    n_decisions = 0
    for _ in range(cfg.periods_per_run):
        n_decisions += int((probe.broadcast & (probe.periods_remaining == 0)).sum())
        probe.step_period()

    counts = []
    for branch in range(2 ** n_decisions):
        world = fresh_world()
        world.rng = ScriptedKeeps([(branch >> i) & 1 for i in range(n_decisions)])
        counts.append(collided_periods(world))
    counts = np.array(counts, dtype=float)
    exact_mean, exact_var = counts.mean(), counts.var()

    n_runs = 100_000
    total = 0
    for i in range(n_runs):
        world = fresh_world()
        world.rng = np.random.default_rng(i)
        total += collided_periods(world)
    estimate = total / n_runs
    assert abs(estimate - exact_mean) <= 3 * np.sqrt(exact_var / n_runs) + 1e-12
