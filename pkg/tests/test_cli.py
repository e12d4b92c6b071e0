import json
import os

import pandas as pd
import pytest

import platoon_sim
import src.harness.experiment as experiment
from src.agents import QApproximator


@pytest.fixture
def config_path(small_cfg, tmp_path):
    path = tmp_path / "scenario.json"
    small_cfg.to_json(str(path))
    return str(path)


@pytest.fixture
def hyper_path(tiny_hyper, tmp_path):
    path = tmp_path / "hyper.json"
    path.write_text(json.dumps(tiny_hyper.to_dict()))
    return str(path)


@pytest.fixture
def spec_path(tmp_path):
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps({"densities": [20, 30], "keep_probs": [0.9],
                                "algorithms": ["analytic", "random"],
                                "runs_per_point": 1, "periods_per_run": 60}))
    return str(path)


def test_analytic_table(tmp_path, capsys):
    out = tmp_path / "out"
    assert platoon_sim.main(["analytic", "--rho", "100", "--keep-prob", "0.9",
                             "--out-dir", str(out)]) == 0
    table = pd.read_csv(out / "analytic.csv")
    assert len(table) == 1
    assert table.P_c_ht.iloc[0] == pytest.approx(0.066, rel=0.01)
    assert "N_r = 200" in capsys.readouterr().out


def test_analytic_full_grid(tmp_path):
    assert platoon_sim.main(["analytic", "--out-dir", str(tmp_path)]) == 0
    assert len(pd.read_csv(tmp_path / "analytic.csv")) == 30


def test_simulate_random(config_path, tmp_path):
    out = tmp_path / "out"
    assert platoon_sim.main(["simulate", "--algo", "random", "--config", config_path,
                             "--out-dir", str(out)]) == 0
    results = pd.read_csv(out / "results.csv")
    assert list(results.algorithm) == ["analytic", "random"]
    assert results.runs.iloc[1] == 2
    assert os.path.exists(out / "results.json")
    assert os.path.exists(out / "report.csv")


def test_simulate_drl_saves_model(config_path, hyper_path, tmp_path):
    model = tmp_path / "q.bin"
    curve = tmp_path / "curve.csv"
    assert platoon_sim.main(["simulate", "--algo", "drl", "--config", config_path,
                             "--hyper", hyper_path, "--runs", "1", "--periods", "60",
                             "--model-out", str(model), "--curve", str(curve),
                             "--out-dir", str(tmp_path / "out")]) == 0
    assert QApproximator.load(str(model)).history_length == 6
    assert len(pd.read_csv(curve)) == 60


def test_sweep(config_path, spec_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert platoon_sim.main(["sweep", "--spec", spec_path, "--config", config_path,
                             "--threads", "1", "--out-dir", str(out)]) == 0
    report = pd.read_csv(out / "report.csv")
    assert list(report.rho) == [20.0, 30.0]
    assert "扫描完成" in capsys.readouterr().out


def test_sweep_reruns_from_results_json(config_path, spec_path, tmp_path):
    first = tmp_path / "first"
    second = tmp_path / "second"
    assert platoon_sim.main(["sweep", "--spec", spec_path, "--config", config_path,
                             "--threads", "1", "--out-dir", str(first)]) == 0
    assert platoon_sim.main(["sweep", "--spec", str(first / "results.json"),
                             "--threads", "1", "--out-dir", str(second)]) == 0
    a = pd.read_csv(first / "results.csv")
    b = pd.read_csv(second / "results.csv")
    assert list(a.collisions) == list(b.collisions)


def test_sweep_exit_code_on_failure(config_path, spec_path, tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("exploded")

    monkeypatch.setattr(experiment, "run_single", boom)
    assert platoon_sim.main(["sweep", "--spec", spec_path, "--config", config_path,
                             "--threads", "1", "--out-dir", str(tmp_path)]) == 1
    results = pd.read_csv(tmp_path / "results.csv")
    assert len(results) == 4


def test_export_and_replay(config_path, tmp_path, capsys):
    sensing = tmp_path / "sensing"
    assert platoon_sim.main(["export-sensing", "--config", config_path,
                             "--out-dir", str(sensing)]) == 0
    files = sorted(os.listdir(sensing))
    pl = next(f for f in files if f.startswith("pl_"))
    pm = next(f for f in files if f.startswith("last_pm_"))
    capsys.readouterr()
    assert platoon_sim.main(["replay", "--pl", str(sensing / pl), "--last-pm", str(sensing / pm),
                             "--algo", "random", "--config", config_path]) == 0
    assert "P_c^ht" in capsys.readouterr().out


def test_replay_too_short(config_path, tmp_path):
    sensing = tmp_path / "sensing"
    assert platoon_sim.main(["export-sensing", "--config", config_path, "--periods", "10",
                             "--out-dir", str(sensing)]) == 0
    files = sorted(os.listdir(sensing))
    pl = next(f for f in files if f.startswith("pl_"))
    pm = next(f for f in files if f.startswith("last_pm_"))
    assert platoon_sim.main(["replay", "--pl", str(sensing / pl), "--last-pm", str(sensing / pm),
                             "--algo", "random", "--config", config_path]) == 1


def test_invalid_override_exits_nonzero(tmp_path):
    assert platoon_sim.main(["analytic", "--keep-prob", "1.5", "--out-dir", str(tmp_path)]) == 1


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        platoon_sim.main(["fly"])


def test_hyper_flags_override_file(hyper_path):
    args = platoon_sim.build_parser().parse_args(
        ["simulate", "--algo", "drl", "--hyper", hyper_path, "--grad-clip", "0.5",
         "--masked-target"])
    hyper = platoon_sim.hyper_from_args(args)
    assert hyper.grad_clip_norm == 0.5
    assert hyper.masked_target
    assert hyper.history_length == 6
