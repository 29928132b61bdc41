import csv
import json

import pytest

from fedagg.cli import main


def read_logs(path):
    rows = []
    for line in path.read_text().splitlines():
        obj = json.loads(line)
        obj.pop("wall_ms")
        rows.append(obj)
    return rows


@pytest.fixture
def small_config(tmp_path):
    cfg = {
        "run_seed": 1,
        "per_client": 20,
        "model": {"kind": "logreg"},
        "aggregation": {"strategy": "avgdiff", "epsilon": 0.5, "fraction": 0.5, "num_clients": 6,
                        "local_epochs": 2, "local_batch": 10, "rounds": 3, "local_lr": 0.5},
        "data": {"synthetic": {"num_examples": 200, "num_classes": 2, "vocab_size": 100, "seed": 2}},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_synth_writes_deterministic_file(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    args = ["--n", "1000", "--classes", "2", "--positive-rate", "0.4816", "--seed", "7"]
    assert main(["synth", "--out", str(a), *args]) == 0
    assert "class 1" in capsys.readouterr().out
    assert main(["synth", "--out", str(b), *args]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 1000


def test_synth_multiclass(tmp_path):
    out = tmp_path / "m.jsonl"
    assert main(["synth", "--out", str(out), "--classes", "5", "--n", "500"]) == 0
    labels = {json.loads(line)["label"] for line in out.read_text().splitlines()}
    assert labels == {0, 1, 2, 3, 4}


def test_synth_bad_rate_exits_2(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "x.jsonl"), "--positive-rate", "2.0"]) == 2


def test_partition(tmp_path):
    data = tmp_path / "d.jsonl"
    main(["synth", "--out", str(data), "--n", "10200", "--vocab", "100"])
    out = tmp_path / "shards.json"
    assert main(["partition", "--in", str(data), "--k", "102", "--per-client", "100", "--out", str(out)]) == 0
    manifest = json.loads(out.read_text())
    assert len(manifest["shards"]) == 102 and manifest["leftover"] == []
    assert manifest["schema_version"] == 1
    assert main(["partition", "--in", str(data), "--k", "103", "--per-client", "100", "--out", str(out)]) == 2


def test_partition_missing_file(tmp_path):
    assert main(["partition", "--in", str(tmp_path / "nope"), "--k", "1", "--per-client", "1",
                 "--out", str(tmp_path / "o.json")]) == 1


@pytest.mark.parametrize("model", ["textcnn", "lstm"])
def test_gradcheck_passes(model, capsys):
    assert main(["gradcheck", "--model", model, "--seed", "3"]) == 0
    assert capsys.readouterr().out.startswith(f"PASS {model}")


def test_gradcheck_invalid_model():
    with pytest.raises(SystemExit) as exc:
        main(["gradcheck", "--model", "resnet"])
    assert exc.value.code == 2


def test_run_layout_and_roundtrip(tmp_path, small_config):
    out = tmp_path / "out"
    assert main(["run", "--config", str(small_config), "--trials", "2", "--out", str(out), "--workers", "2"]) == 0
    (run_dir,) = out.iterdir()
    files = sorted(p.name for p in run_dir.iterdir())
    assert files == ["curve.csv", "manifest.json", "model-000.npy", "model-001.npy",
                     "trial-000.jsonl", "trial-001.jsonl"]
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["schema_version"] == 1 and manifest["trials"] == 2
    logs = read_logs(run_dir / "trial-000.jsonl")
    assert len(logs) == 3 and all(row["schema_version"] == 1 for row in logs)
    assert read_logs(run_dir / "trial-000.jsonl") != read_logs(run_dir / "trial-001.jsonl")
    with open(run_dir / "curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["round"] for r in rows] == ["1", "2", "3"]

    # feeding the manifest back in reproduces the logs
    out2 = tmp_path / "out2"
    assert main(["run", "--config", str(run_dir / "manifest.json"), "--trials", "2", "--out", str(out2),
                 "--workers", "1"]) == 0
    (run_dir2,) = out2.iterdir()
    for name in ("trial-000.jsonl", "trial-001.jsonl"):
        assert read_logs(run_dir / name) == read_logs(run_dir2 / name)


def test_run_reference_regime_round_count(tmp_path, small_config):
    cfg = json.loads(small_config.read_text())
    cfg["aggregation"].update(rounds=10, local_batch=10, local_epochs=5, fraction=0.1, num_clients=10)
    cfg["per_client"] = 10
    small_config.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(small_config), "--out", str(tmp_path / "o")]) == 0
    (run_dir,) = (tmp_path / "o").iterdir()
    assert len(read_logs(run_dir / "trial-000.jsonl")) == 10


def test_run_unknown_strategy(tmp_path, small_config, capsys):
    rc = main(["run", "--config", str(small_config), "--set", "aggregation.strategy=median",
               "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "aggregation.strategy" in capsys.readouterr().err


def test_run_unknown_field(tmp_path, small_config, capsys):
    assert main(["run", "--config", str(small_config), "--set", "aggregation.stepsize=0.1",
                 "--out", str(tmp_path / "o")]) == 2
    assert "aggregation.stepsize" in capsys.readouterr().err


def test_cv_command(small_config, capsys):
    assert main(["cv", "--config", str(small_config), "--folds", "2", "--set", "central_epochs=1"]) == 0
    assert "2-fold centralized accuracy" in capsys.readouterr().out
