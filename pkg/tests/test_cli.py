import json

import pytest

import policyscope as ps
from policyscope.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def last_json_line(out: str) -> dict:
    lines = [line for line in out.strip().splitlines() if line]
    return json.loads(lines[-1])


class TestSimulate:
    def test_writes_trace_and_summary(self, tmp_path, capsys):
        out = tmp_path / "ep.jsonl"
        code, stdout, _ = run(capsys, "simulate", "--scenario", "default",
                              "--policy", "threshold:0.8", "--seed", "7",
                              "--out", str(out))
        assert code == 0
        summary = last_json_line(stdout)
        assert summary["command"] == "simulate"
        assert summary["steps"] == 44
        assert summary["total_reward"] == 52.0
        parsed = ps.read_trace(out)
        assert len(parsed.steps) == 44

    def test_single_summary_line(self, tmp_path, capsys):
        code, stdout, _ = run(capsys, "simulate", "--out",
                              str(tmp_path / "t.jsonl"))
        assert code == 0
        assert len(stdout.strip().splitlines()) == 1

    def test_deterministic_given_seed(self, tmp_path, capsys):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        run(capsys, "simulate", "--seed", "5", "--out", str(a))
        run(capsys, "simulate", "--seed", "5", "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_scenario_file(self, tmp_path, capsys):
        config = ps.ScenarioConfig(name="mini", horizon=5)
        path = tmp_path / "mini.json"
        ps.save_scenario_config(config, path)
        code, stdout, _ = run(capsys, "simulate", "--scenario", str(path),
                              "--out", str(tmp_path / "t.jsonl"))
        assert code == 0
        assert last_json_line(stdout)["steps"] <= 5


class TestPipelineRoundTrip:
    def test_simulate_ingest_export_byte_identical(self, tmp_path, capsys):
        out = tmp_path / "ep.jsonl"
        run(capsys, "simulate", "--policy", "random", "--seed", "3",
            "--out", str(out))
        store = tmp_path / "store"
        code, stdout, _ = run(capsys, "ingest", "--store", str(store), str(out))
        assert code == 0
        store_id = last_json_line(stdout)["ingested"][0]
        exported = ps.TraceStore(store).export_trace(store_id)
        assert exported == out.read_text()


class TestEvaluate:
    def test_prints_eval_stats_json(self, capsys):
        code, stdout, _ = run(capsys, "evaluate", "--policy", "never_defend",
                              "--episodes", "3", "--seed", "2")
        assert code == 0
        stats = last_json_line(stdout)
        assert stats["episodes"] == 3
        assert {"mean_return", "stddev_return", "mean_length",
                "defend_frequency", "false_alarm_count"} <= set(stats)

    def test_zero_episodes_usage_error(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["evaluate", "--policy", "random", "--episodes", "0"])
        assert err.value.code == 2
        assert "--episodes" in capsys.readouterr().err

    def test_unknown_flag_usage_error(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["evaluate", "--policy", "random", "--episodes", "1",
                  "--turbo"])
        assert err.value.code == 2


class TestTrain:
    def test_zero_iterations_yields_uniform_policy(self, tmp_path, capsys):
        out = tmp_path / "pol.json"
        config = tmp_path / "train.json"
        config.write_text(json.dumps({"iterations": 0, "seed": 4}))
        code, stdout, _ = run(capsys, "train", "--config", str(config),
                              "--out", str(out))
        assert code == 0
        policy = ps.load_policy(out.read_bytes())
        dist = policy.predict(ps.PolicyInput(
            ps.Belief([0.1, 0.2, 0.3, 0.4]), ps.Observation((5, 5, 5)), 0.5))
        assert dist.tolist() == pytest.approx([0.5, 0.5], abs=1e-12)
        assert (tmp_path / "pol.json.stats.json").exists()
        summary = last_json_line(stdout)
        assert summary["iterations"] == 0

    def test_short_training_writes_stats(self, tmp_path, capsys):
        out = tmp_path / "pol.json"
        stats_path = tmp_path / "stats.json"
        code, stdout, _ = run(capsys, "train", "--iterations", "2",
                              "--seed", "3", "--out", str(out),
                              "--stats", str(stats_path))
        assert code == 0
        stats = json.loads(stats_path.read_text())
        assert len(stats["iterations"]) == 2
        summary = last_json_line(stdout)
        assert summary["final_iteration_return"] is not None


class TestEstimate:
    def test_estimate_from_store(self, tmp_path, capsys):
        out = tmp_path / "ep.jsonl"
        store = tmp_path / "store"
        run(capsys, "simulate", "--policy", "random", "--seed", "1",
            "--out", str(out))
        _, stdout, _ = run(capsys, "ingest", "--store", str(store), str(out))
        store_id = last_json_line(stdout)["ingested"][0]
        kernel_path = tmp_path / "kernel.json"
        code, stdout, _ = run(capsys, "estimate", "--store", str(store),
                              "--traces", store_id, "--out", str(kernel_path))
        assert code == 0
        payload = json.loads(kernel_path.read_text())
        assert payload["metrics"] == ["ids_alerts", "failed_logins",
                                      "new_connections"]

    def test_unknown_trace_runtime_error(self, tmp_path, capsys):
        code, _, stderr = run(capsys, "estimate", "--store",
                              str(tmp_path / "store"), "--traces", "t000009")
        assert code == 1
        assert json.loads(stderr.strip().splitlines()[-1])["code"] == "not_found"


class TestScenarios:
    def test_show_default(self, capsys):
        code, stdout, _ = run(capsys, "scenarios", "--show", "default")
        assert code == 0
        config = last_json_line(stdout)
        assert config["name"] == "intrusion-default"
        assert config["schema_version"] == 1

    def test_listing(self, capsys):
        code, stdout, _ = run(capsys, "scenarios")
        assert code == 0
        assert last_json_line(stdout)["builtin"] == ["intrusion-default"]


class TestErrors:
    def test_missing_scenario_file_exit_1(self, tmp_path, capsys):
        code, _, stderr = run(capsys, "simulate", "--scenario",
                              str(tmp_path / "nope.json"),
                              "--out", str(tmp_path / "t.jsonl"))
        assert code == 1
        assert json.loads(stderr.strip().splitlines()[-1])["code"] == "not_found"

    def test_bad_trace_file_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{broken\n")
        code, _, stderr = run(capsys, "ingest", "--store",
                              str(tmp_path / "store"), str(bad))
        assert code == 1
        assert json.loads(stderr.strip().splitlines()[-1])["code"] == "ingest"
