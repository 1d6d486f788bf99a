import csv
import dataclasses
import json
import subprocess
import sys

import pytest

from xaifs.benchmark import AttributionBudget, DataSpec, ExperimentConfig, ModelSpec
from xaifs.cli import CONFIG_ENV, main

MODELS = [ModelSpec("RF", "RandomForest", {"n_trees": 8}), ModelSpec("KNN", "KNN"),
          ModelSpec("DNN", "MLP", {"input_layer": True, "epochs": 2, "min_updates": 100})]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "flows.csv"
    assert main(["synth", "--samples", "900", "--features", "8", "--informative", "3", "--classes", "3",
                 "--seed", "2", "--out", str(data)]) == 0
    cfg = ExperimentConfig(data=DataSpec(path=str(data)), models=MODELS,
                           methods=["overall_rank", "models_attacks", "chi2"], k_values=[3, "all"], seed=1,
                           budget=AttributionBudget(background_size=8, explain_samples=20, n_coalitions=32,
                                                    xplique_samples=0))
    cfg_path = root / "config.json"
    cfg.save(cfg_path)
    return root, data, cfg_path


def bench(root, cfg_path, name, *extra):
    out = root / name
    assert main(["benchmark", "--config", str(cfg_path), "--out", str(out), "--no-charts", *extra]) == 0
    return out


def test_benchmark_writes_reports(workspace):
    root, _, cfg_path = workspace
    out = bench(root, cfg_path, "run_a")
    for rel in ("config.json", "results.json", "metrics/metrics.csv", "boards/scoreboard_k=3.csv",
                "boards/scoreboard_overall.txt", "rankings/rankings.csv", "models/RF.model",
                "attributions/shap_KNN.csv", "runtimes/runtimes.csv"):
        assert (out / rel).exists(), rel
    rows = json.loads((out / "results.json").read_text())
    assert len(rows) == 3 * 2 * 3


def test_benchmark_reproducible_bytes(workspace):
    root, _, cfg_path = workspace
    a = bench(root, cfg_path, "run_a2")
    b = bench(root, cfg_path, "run_b", "--n-jobs", "2")
    for rel in ("metrics/metrics.csv", "rankings/rankings.csv", "boards/scoreboard_overall.csv"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_snapshot_reproduces_run(workspace):
    root, _, cfg_path = workspace
    a = bench(root, cfg_path, "run_snap")
    b = bench(root, a / "config.json", "run_snap2")
    assert (a / "metrics/metrics.csv").read_bytes() == (b / "metrics/metrics.csv").read_bytes()


def test_report_rebuilds_boards(workspace):
    root, _, cfg_path = workspace
    out = bench(root, cfg_path, "run_rep")
    before = (out / "boards/scoreboard_k=3.csv").read_bytes()
    (out / "boards/scoreboard_k=3.csv").unlink()
    assert main(["report", "--out", str(out), "--no-charts"]) == 0
    assert (out / "boards/scoreboard_k=3.csv").read_bytes() == before


def test_staged_pipeline(workspace, monkeypatch):
    root, _, cfg_path = workspace
    monkeypatch.setenv(CONFIG_ENV, str(cfg_path))   # config from the environment only
    run = str(root / "staged")
    for cmd in ("prepare", "train", "evaluate", "explain"):
        assert main([cmd, "--out", run]) == 0, cmd
    monkeypatch.delenv(CONFIG_ENV)                  # later stages fall back to the snapshot
    out_csv = root / "ma.csv"
    assert main(["rank", "--out", run, "--method", "models_attacks", "--k", "5", "--output", str(out_csv)]) == 0
    with open(out_csv) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    assert [r["selected"] for r in rows] == ["1"] * 5 + ["0"] * 3
    assert [int(r["rank"]) for r in rows] == list(range(1, 9))
    assert main(["select", "--out", run, "--ranking", str(out_csv), "--k", "3"]) == 0
    feats = (root / "staged" / "selected" / "ma_k3" / "features.txt").read_text().split()
    assert len(feats) == 3
    header = (root / "staged" / "selected" / "ma_k3" / "train.csv").read_text().splitlines()[0].split(",")
    assert set(feats) <= set(header)


def test_exit_codes(workspace, tmp_path, capsys):
    root, data, cfg_path = workspace
    assert main(["nonsense"]) == 1
    assert main(["benchmark", "--out", str(tmp_path / "x")]) == 1                    # no data anywhere
    assert main(["benchmark", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "y")]) == 2
    assert main(["benchmark", "--config", str(cfg_path), "--k", "99", "--out", str(tmp_path / "z")]) == 1
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "empty")]) == 2
    assert main(["report", "--out", str(tmp_path / "empty")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**ExperimentConfig().to_dict(), "methods": ["lasso"], "k_values": [3],
                               "data": dataclasses.asdict(DataSpec(path=str(data)))}))
    assert main(["benchmark", "--config", str(bad), "--out", str(tmp_path / "w")]) == 1
    err = capsys.readouterr().err
    assert "lasso" in err


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "xaifs.cli", "bogus"], capture_output=True, text=True)
    assert r.returncode == 1
    r = subprocess.run([sys.executable, "-m", "xaifs.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "benchmark" in r.stdout
