import csv
import io
import json

import pytest

from chainsim import scenarios
from chainsim.cli import apply_axis, main, replay_verdict
from chainsim.simnet import InvariantViolation, Simulator


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg.to_dict()))
    return str(p)


@pytest.fixture
def golden_cfg(tmp_path):
    return write_config(tmp_path, scenarios.golden_fork())


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_writes_trace_summary_and_manifest(tmp_path, capsys, golden_cfg):
    out_dir = tmp_path / "out"
    code, out, _ = run_cli(capsys, "run", "--config", golden_cfg, "--out", str(out_dir),
                           "--metric", "fork_intervals")
    assert code == 0
    summary = json.loads(out)
    assert summary["runs"][0]["metrics"]["fork_intervals"] == [[241.0, 710.0]]
    traces = sorted(out_dir.glob("trace-*-s0.jsonl"))
    assert len(traces) == 1
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["seeds"] == [0] and manifest["command"] == "run"
    assert (out_dir / "summary.json").exists()


def test_replay_ok_then_mismatch(tmp_path, capsys, golden_cfg):
    out_dir = tmp_path / "out"
    run_cli(capsys, "run", "--config", golden_cfg, "--out", str(out_dir))
    (trace,) = out_dir.glob("trace-*.jsonl")
    code, out, _ = run_cli(capsys, "replay", str(trace))
    assert code == 0 and ": ok" in out
    lines = trace.read_text().splitlines()
    lines[2] = lines[2].replace("0", "1", 1)
    trace.write_text("\n".join(lines) + "\n")
    code, out, _ = run_cli(capsys, "replay", str(trace))
    assert code == 4 and "mismatch" in out
    assert not replay_verdict(str(trace))[0]


def test_missing_config_is_usage_error(capsys):
    code, _, err = run_cli(capsys, "run")
    assert code == 2 and "--config" in err


def test_unknown_metric_lists_choices(capsys, golden_cfg):
    code, _, err = run_cli(capsys, "run", "--config", golden_cfg, "--metric", "foo")
    assert code == 2 and "hhi" in err


def test_invalid_config_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"protocol": "nakamoto", "nodes": []}))
    assert run_cli(capsys, "run", "--config", str(p))[0] == 2


def test_bad_subcommand_exits_2(capsys):
    assert run_cli(capsys, "frobnicate")[0] == 2


def test_invariant_violation_exits_3(monkeypatch, capsys, golden_cfg):
    def broken(self):
        raise InvariantViolation("synthetic")
    monkeypatch.setattr(Simulator, "_check_invariants", broken)
    code, _, err = run_cli(capsys, "run", "--config", golden_cfg)
    assert code == 3 and "synthetic" in err


def test_horizon_zero_run(capsys, golden_cfg):
    code, out, _ = run_cli(capsys, "run", "--config", golden_cfg, "--horizon", "0")
    assert code == 0
    assert json.loads(out)["runs"][0]["blocks"] == 0


def test_ibft_message_sweep(tmp_path, capsys):
    cfg = write_config(tmp_path, scenarios.ibft(k=4, horizon=30.0))
    code, out, _ = run_cli(capsys, "sweep", "--config", cfg, "--axis", "ibft.k",
                           "--values", "4,7,10", "--metric", "message_complexity")
    assert code == 0
    rows = [r for r in csv.DictReader(io.StringIO(out)) if r["row"] == "mean"]
    assert [float(r["message_complexity"]) for r in rows] == [27.0, 90.0, 189.0]


def test_sweep_needs_two_values_and_valid_axis(tmp_path, capsys):
    cfg = write_config(tmp_path, scenarios.ibft(k=4, horizon=10.0))
    assert run_cli(capsys, "sweep", "--config", cfg, "--axis", "ibft.k", "--values", "4")[0] == 2
    assert run_cli(capsys, "sweep", "--config", cfg, "--axis", "nope.x", "--values", "1,2")[0] == 2


def test_apply_axis_keeps_original():
    cfg = scenarios.ibft(k=4)
    bigger = apply_axis(cfg, "ibft.k", 7)
    assert bigger.ibft.k == 7 and cfg.ibft.k == 4


def test_saturated_capacity_sweep_is_proportional(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PRESTO_SIM_THREADS", "1")
    cfg = write_config(tmp_path, scenarios.nakamoto([1.0], mean_block_interval=10.0, horizon=2000.0,
                                                    max_txs_per_block=1, initial_txs=2000))
    code, out, _ = run_cli(capsys, "sweep", "--config", cfg,
                           "--axis", "nakamoto.max_txs_per_block", "--values", "1,2,4",
                           "--seeds", "2", "--out", str(tmp_path / "sw"))
    assert code == 0
    means = [float(r["throughput"]) for r in csv.DictReader(io.StringIO(out)) if r["row"] == "mean"]
    assert means[1] == pytest.approx(2 * means[0], rel=1e-9)
    assert means[2] == pytest.approx(4 * means[0], rel=1e-9)
    assert (tmp_path / "sw" / "sweep.json").exists()


def test_parallel_matches_serial(tmp_path, capsys, monkeypatch, golden_cfg):
    cfg = write_config(tmp_path, scenarios.nakamoto([1, 2], mean_block_interval=5.0, latency=1.0,
                                                    horizon=300.0), "n.json")
    monkeypatch.setenv("PRESTO_SIM_THREADS", "1")
    serial = json.loads(run_cli(capsys, "run", "--config", cfg, "--seeds", "3")[1])
    monkeypatch.setenv("PRESTO_SIM_THREADS", "2")
    parallel = json.loads(run_cli(capsys, "run", "--config", cfg, "--seeds", "3")[1])
    assert serial == parallel
    monkeypatch.setenv("PRESTO_SIM_THREADS", "many")
    assert run_cli(capsys, "run", "--config", cfg, "--seeds", "2")[0] == 2


def test_metrics_from_state_files_and_flags(tmp_path, capsys):
    shares = tmp_path / "shares.json"
    shares.write_text(json.dumps({"shares": list(scenarios.BITCOIN_TOP10)}))
    code, out, _ = run_cli(capsys, "metrics", "--metric", "hhi", str(shares))
    assert code == 0
    (row,) = csv.DictReader(io.StringIO(out))
    assert float(row["value"]) == pytest.approx(1075.71, abs=0.01)
    code, out, _ = run_cli(capsys, "metrics", "--metric", "pivotality",
                           "--weights", "0.45,0.40,0.15", "--threshold", "0.51")
    assert code == 0 and "[2, 2, 2]" in out
    assert run_cli(capsys, "metrics", "--metric", "pivotality", "--weights", "0.5,0.5")[0] == 2
    assert run_cli(capsys, "metrics")[0] == 2


def test_report_from_config(tmp_path, capsys, golden_cfg):
    out_dir = tmp_path / "rep"
    code, out, _ = run_cli(capsys, "report", "--config", golden_cfg, "--out", str(out_dir),
                           "--metric", "forks", "--metric", "safety")
    assert code == 0
    doc = json.loads((out_dir / "report.json").read_text())
    assert {e["metric"] for e in doc["entries"]} == {"forks", "safety"}
    assert (out_dir / "report.csv").exists() and (out_dir / "manifest.json").exists()
    assert run_cli(capsys, "report")[0] == 2
