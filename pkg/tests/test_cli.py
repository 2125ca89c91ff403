"""Command-line interface: exit codes, config precedence, determinism.

The CLI is supposed to be pure orchestration, so several tests run the
same configuration through direct library calls and require the reports
to match exactly.
"""

import csv
import json

import pytest

from epikit.cli import build_parser, main, run_serve
from epikit.detect import DETECTORS, evaluate_detector, synthetic_tree_cases
from epikit.forecast import ARForecaster, WindowSpec, evaluate_forecaster
from epikit.io_data import generate_toy_dataset, load_dataset, save_snapshot
from epikit.detect import Snapshot
from epikit.types import SeedPolicy, StaticGraph


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(autouse=True)
def no_ambient_seed(monkeypatch):
    monkeypatch.delenv("EPIKIT_SEED", raising=False)


class TestForecastCommand:
    DEMO = ("forecast", "--data", "toy", "--model", "ar",
            "--lookback", "12", "--horizon", "3", "--seed", "7")

    def test_demo_runs_and_reports(self, capsys):
        code, out, err = run_cli(capsys, *self.DEMO)
        assert code == 0
        report = json.loads(out)
        assert set(report) == {"task", "model", "metrics", "config", "seed"}
        assert report["task"] == "forecast"
        assert report["model"] == "ar"
        assert report["seed"] == 7
        assert report["config"]["lookback"] == 12
        assert report["metrics"]["n_windows"] >= 1
        assert "forecast[ar]" in err

    def test_rerun_byte_identical(self, capsys):
        _, first, _ = run_cli(capsys, *self.DEMO)
        _, second, _ = run_cli(capsys, *self.DEMO)
        assert first == second

    def test_matches_direct_library_call(self, capsys):
        _, out, _ = run_cli(capsys, *self.DEMO)
        ds = generate_toy_dataset(SeedPolicy(7))
        direct = evaluate_forecaster(ARForecaster(), ds, WindowSpec(12, 3))
        assert json.loads(out)["metrics"] == json.loads(
            json.dumps(direct.as_dict()))

    def test_unknown_model_exit_2_lists_models(self, capsys):
        code, _, err = run_cli(capsys, "forecast", "--model", "nope")
        assert code == 2
        assert "persistence" in err and "ar" in err

    def test_horizon_zero_exit_2(self, capsys):
        code, _, _ = run_cli(capsys, "forecast", "--horizon", "0")
        assert code == 2

    def test_config_file_and_flag_precedence(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": "persistence", "lookback": 6,
                                   "seed": 3}))
        code, out, _ = run_cli(capsys, "forecast", "--config", str(cfg),
                               "--lookback", "8")
        assert code == 0
        report = json.loads(out)
        assert report["config"]["model"] == "persistence"  # from file
        assert report["config"]["lookback"] == 8           # flag wins
        assert report["seed"] == 3                         # from file

    def test_unknown_config_field_exit_2(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"looback": 6}))
        code, _, err = run_cli(capsys, "forecast", "--config", str(cfg))
        assert code == 2
        assert "looback" in err

    def test_env_seed_default_and_override(self, capsys, monkeypatch):
        monkeypatch.setenv("EPIKIT_SEED", "42")
        _, out, _ = run_cli(capsys, "forecast", "--model", "persistence")
        assert json.loads(out)["seed"] == 42
        _, out, _ = run_cli(capsys, "forecast", "--model", "persistence",
                            "--seed", "5")
        assert json.loads(out)["seed"] == 5

    def test_bad_env_seed_exit_2(self, capsys, monkeypatch):
        monkeypatch.setenv("EPIKIT_SEED", "banana")
        code, _, err = run_cli(capsys, "forecast")
        assert code == 2
        assert "seed" in err

    def test_transforms_from_config_file(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "model": "persistence",
            "transforms": {"features": [{"name": "normalize_features"}]},
        }))
        code, out, _ = run_cli(capsys, "forecast", "--config", str(cfg),
                               "--seed", "1")
        assert code == 0
        assert json.loads(out)["config"]["transforms"] is not None

    def test_out_file_matches_stdout(self, capsys, tmp_path):
        out_path = tmp_path / "report.json"
        _, out, _ = run_cli(capsys, *self.DEMO, "--out", str(out_path))
        assert out_path.read_text() == out

    def test_dataset_from_file(self, capsys, tmp_path):
        ds_path = tmp_path / "ds.json"
        code, _, _ = run_cli(capsys, "simulate", "scenario", "--n", "12",
                             "--steps", "30", "--seed", "2",
                             "--out", str(ds_path))
        assert code == 0
        code, out, _ = run_cli(capsys, "forecast", "--data", str(ds_path),
                               "--model", "persistence", "--lookback", "3",
                               "--horizon", "2", "--seed", "2")
        assert code == 0
        assert json.loads(out)["config"]["data"] == str(ds_path)

    def test_missing_dataset_file_exit_1(self, capsys):
        code, _, _ = run_cli(capsys, "forecast", "--data", "/nope/missing.json")
        assert code == 1


class TestDetectCommand:
    def test_synthetic_deterministic(self, capsys):
        args = ("detect", "--cases", "synthetic-trees", "--detector", "rumor",
                "--n-cases", "40", "--seed", "7")
        code, first, err = run_cli(capsys, *args)
        assert code == 0
        _, second, _ = run_cli(capsys, *args)
        assert first == second
        metrics = json.loads(first)["metrics"]
        assert set(metrics) == {"top1", "top3", "mean_rank", "n_cases"}
        assert "detect[rumor]" in err

    def test_matches_direct_library_call(self, capsys):
        _, out, _ = run_cli(capsys, "detect", "--detector", "jordan",
                            "--n-cases", "30", "--seed", "4")
        cases = synthetic_tree_cases(30, SeedPolicy(4))
        direct = evaluate_detector(DETECTORS["jordan"], cases).as_dict()
        assert json.loads(out)["metrics"] == json.loads(json.dumps(direct))

    def test_all_detectors_sectioned(self, capsys):
        _, out, _ = run_cli(capsys, "detect", "--detector", "all",
                            "--n-cases", "20", "--seed", "1")
        metrics = json.loads(out)["metrics"]
        assert set(metrics) == {"jordan", "rumor"}
        for section in metrics.values():
            assert "top1" in section

    def test_unknown_detector_exit_2(self, capsys):
        code, _, err = run_cli(capsys, "detect", "--detector", "psychic")
        assert code == 2
        assert "jordan" in err

    def test_zero_cases_exit_2(self, capsys):
        code, _, _ = run_cli(capsys, "detect", "--n-cases", "0")
        assert code == 2

    def test_snapshot_file_ranking(self, capsys, tmp_path):
        g = StaticGraph(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
        path = tmp_path / "snap.json"
        save_snapshot(Snapshot(graph=g, infected=frozenset({1, 2, 3})), path)
        code, out, _ = run_cli(capsys, "detect", "--cases", str(path),
                               "--detector", "rumor")
        assert code == 0
        ranking = json.loads(out)["metrics"]["ranking"]
        assert ranking[0][0] == 2  # center of the infected path
        assert ranking[0][1] == pytest.approx(0.5)

    def test_disconnected_snapshot_exit_1(self, capsys, tmp_path):
        g = StaticGraph(4, [(0, 1), (2, 3)])
        path = tmp_path / "snap.json"
        save_snapshot(Snapshot(graph=g, infected=frozenset({0, 1, 2, 3})), path)
        code, _, err = run_cli(capsys, "detect", "--cases", str(path),
                               "--detector", "jordan")
        assert code == 1
        assert "disconnected snapshot" in err


class TestSimulateCommand:
    def test_sir_writes_dataset_and_curve(self, capsys, tmp_path):
        out_path = tmp_path / "sir.json"
        csv_path = tmp_path / "sir.csv"
        code, out, err = run_cli(capsys, "simulate", "sir", "--beta", "0.3",
                                 "--gamma", "0.1", "--n", "1000", "--i0", "1",
                                 "--horizon", "160", "--dt", "0.1",
                                 "--seed", "7", "--out", str(out_path),
                                 "--emit-curve", str(csv_path))
        assert code == 0
        ds = load_dataset(out_path)
        assert ds.panel.shape == (1601, 1, 3)
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["time", "S", "I", "R"]
        assert len(rows) == 1602
        report = json.loads(out)
        # CSV tail and report agree on the final state
        assert float(rows[-1][3]) == pytest.approx(report["metrics"]["final"]["R"])
        assert float(rows[-1][0]) == 160.0

    def test_same_seed_identical_files(self, capsys, tmp_path):
        paths = [tmp_path / "a.json", tmp_path / "b.json"]
        for path in paths:
            run_cli(capsys, "simulate", "network-sir", "--n", "25",
                    "--steps", "15", "--seed", "7", "--out", str(path))
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_network_sir_dataset_contents(self, capsys, tmp_path):
        path = tmp_path / "net.json"
        code, _, _ = run_cli(capsys, "simulate", "network-sir", "--n", "30",
                             "--steps", "20", "--seed", "3", "--out", str(path))
        assert code == 0
        ds = load_dataset(path)
        assert ds.states.states.shape == (21, 30)
        assert ds.static_graph.n_nodes == 30
        assert ds.panel.shape == (21, 30, 1)

    def test_scenario_dataset_contents(self, capsys, tmp_path):
        path = tmp_path / "scen.json"
        code, _, _ = run_cli(capsys, "simulate", "scenario", "--n", "10",
                             "--steps", "12", "--seed", "3", "--out", str(path))
        assert code == 0
        ds = load_dataset(path)
        assert ds.panel.shape == (13, 10, 2)
        assert ds.dynamic_graph.n_steps == 13

    def test_seir_compartments(self, capsys, tmp_path):
        path = tmp_path / "seir.json"
        code, out, _ = run_cli(capsys, "simulate", "seir", "--horizon", "10",
                               "--out", str(path))
        assert code == 0
        assert set(json.loads(out)["metrics"]["final"]) == {"S", "E", "I", "R"}
        obj = json.loads(path.read_text())
        assert obj["metadata"]["compartments"] == ["S", "E", "I", "R"]

    def test_negative_beta_exit_2(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, "simulate", "sir", "--beta", "-1",
                             "--out", str(tmp_path / "x.json"))
        assert code == 2

    def test_missing_out_exit_2(self, capsys):
        code, _, err = run_cli(capsys, "simulate", "sir")
        assert code == 2
        assert "out" in err

    def test_no_curve_unless_asked(self, capsys, tmp_path):
        run_cli(capsys, "simulate", "sis", "--horizon", "5",
                "--out", str(tmp_path / "s.json"))
        assert list(tmp_path.glob("*.csv")) == []


class TestServeCommand:
    def test_invalid_port_exit_2(self, capsys):
        code, _, err = run_cli(capsys, "serve", "--port", "0")
        assert code == 2
        assert "port" in err

    def test_runner_invoked_with_config(self, capsys):
        calls = {}

        def fake_runner(app, host, port, log_level):
            calls["host"], calls["port"] = host, port

        args = build_parser().parse_args(["serve", "--port", "8123"])
        assert run_serve(args, runner=fake_runner) == 0
        assert calls == {"host": "127.0.0.1", "port": 8123}


class TestParserBasics:
    def test_no_command_exit_2(self, capsys):
        assert main([]) == 2

    def test_help_exit_0(self, capsys):
        assert main(["--help"]) == 0
        assert "simulate" in capsys.readouterr().out
