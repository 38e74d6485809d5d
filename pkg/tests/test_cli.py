import io
import json
import shutil

import pytest

from vaultcredit import cli

FAST = {"n_paths": 200, "v3_paths": 2000, "scenarios": {"set": "parametric"}}


def run(*argv):
    buf = io.StringIO()
    code = cli.run([str(a) for a in argv], stdout=buf)
    return code, json.loads(buf.getvalue())


@pytest.fixture
def fast_demo(tmp_path, demo_dir):
    """The demo config with fewer paths, pointing at a private copy of the bundle."""
    shutil.copytree(demo_dir / "bundle", tmp_path / "bundle")
    shutil.copy(demo_dir / "graph.json", tmp_path / "graph.json")
    cfg = json.loads((demo_dir / "config.json").read_text())
    cfg.update(FAST)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_score_matches_golden_report(tmp_path, demo_dir):
    code, msg = run("score", "--config", demo_dir / "config.json", "--out", tmp_path / "out")
    assert code == 0 and msg["status"] == "ok"
    assert (tmp_path / "out" / "report.json").read_bytes() == (demo_dir / "golden" / "report.json").read_bytes()


def test_missing_gas_scores_v5_zero(tmp_path, fast_demo):
    (fast_demo.parent / "bundle" / "gas.csv").unlink()
    code, _ = run("score", "--config", fast_demo, "--out", tmp_path / "out", "--force")
    assert code == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    v5 = report["vcs"]["normalized"]["V5"]
    assert v5["raw"] is None and v5["score"] == 0.0 and v5["worst_case"]
    assert any("gas" in w and "WORST-CASE" in w for w in report["warnings"])
    assert report["vcs"]["vcs_mult"] == 0.0


@pytest.mark.parametrize("command,files", [
    ("ingest", ["ingest.json"]),
    ("estimate", ["estimates.json"]),
    ("stress", ["scenarios.json", "stress.json"]),
    ("backtest", ["validation.json"]),
])
def test_commands_echo_config(tmp_path, fast_demo, command, files):
    code, msg = run(command, "--config", fast_demo, "--out", tmp_path / "out", "--seed", 3)
    assert code == 0
    assert msg["files"] == files
    assert msg["config"]["seed"] == 3 and msg["config"]["n_paths"] == 200
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == files


def test_csv_tables(tmp_path, fast_demo):
    code, msg = run("score", "--config", fast_demo, "--out", tmp_path / "out", "--format", "csv")
    assert code == 0
    assert set(msg["files"]) == {"report.json", "metrics.csv", "scores.csv", "warnings.csv"}
    scores = (tmp_path / "out" / "scores.csv").read_text().splitlines()
    assert len(scores) >= 6


def test_missing_config_is_an_error(tmp_path):
    out = tmp_path / "out"
    code, msg = run("score", "--config", tmp_path / "nope.json", "--out", out)
    assert code == 2
    assert msg["status"] == "error" and msg["error"]["code"] == "config_error"
    assert not out.exists()


def test_bad_data_leaves_no_partial_output(tmp_path, fast_demo):
    snaps = fast_demo.parent / "bundle" / "snapshots.csv"
    lines = snaps.read_text().splitlines()
    lines[2], lines[3] = lines[3], lines[2]
    snaps.write_text("\n".join(lines) + "\n")
    out = tmp_path / "out"
    code, msg = run("score", "--config", fast_demo, "--out", out, "--format", "csv")
    assert code == 2
    assert msg["error"]["code"] == "ordering_error"
    assert "snapshots.csv" in msg["error"]["message"]
    assert not out.exists()


def test_existing_output_dir_keeps_unrelated_files(tmp_path, fast_demo):
    out = tmp_path / "out"
    out.mkdir()
    (out / "notes.txt").write_text("mine")
    (out / "ingest.json").write_text("old")
    assert run("ingest", "--config", fast_demo, "--out", out)[0] == 0
    assert (out / "notes.txt").read_text() == "mine"
    assert json.loads((out / "ingest.json").read_text())
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".out.")]


def test_simulate(tmp_path, demo_dir):
    out = tmp_path / "world"
    code, msg = run("simulate", "--config", demo_dir / "world_config.json", "--out", out, "--seed", 4, "--hours", 300, "--no-paths")
    assert code == 0
    assert msg["config"]["hours"] == 300
    assert {"snapshots.csv", "oracle.csv", "truth.json", "world_config.json"} <= set(msg["files"])
    assert "true_prices" not in json.loads((out / "truth.json").read_text())


def test_bad_workers(tmp_path, fast_demo):
    code, msg = run("score", "--config", fast_demo, "--out", tmp_path / "out", "--workers", 0)
    assert code == 2 and msg["status"] == "error"
