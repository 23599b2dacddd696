import json
import subprocess
import sys

import numpy as np
import pytest

from probetherm.cli import main
from probetherm.config import RUN_FORMAT, ConfigError, parse_run_config
from probetherm.dataset import read_dataset, split
from probetherm.knn import cross_validate, load_model


def write_config(path, **grid):
    base = {"T_range": [0.1, 2.0, 60], "gamma_range": [1.0, 1.0, 1], "noise_rel_std": 0.03}
    base.update(grid)
    path.write_text(json.dumps({"format_version": RUN_FORMAT, "grid": base}))
    return str(path)


@pytest.fixture()
def small_dataset(tmp_path):
    cfg = write_config(tmp_path / "run.json")
    out = tmp_path / "d.csv"
    assert main(["-q", "generate", "--config", cfg, "--out", str(out)]) == 0
    return out


# ---------------------------------------------------------------- generate

def test_dry_run_default_grid(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["-q", "generate", "--dry-run"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["rows"] == 100_000 and info["columns"] == 10
    assert list(tmp_path.iterdir()) == []


def test_generate_default_grid(tmp_path):
    out = tmp_path / "default.csv"
    assert main(["-q", "generate", "--out", str(out)]) == 0
    ds, manifest = read_dataset(out)
    assert len(ds) == 100_000 and ds.schema.n_d == 7
    assert manifest["seed"] == 20211


def test_generate_writes_manifest(small_dataset):
    ds, manifest = read_dataset(small_dataset)
    assert len(ds) == 60
    assert manifest["config"]["T_range"] == [0.1, 2.0, 60]


def test_invalid_range_names_field(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.json", T_range=[2.0, 0.1, 10])
    assert main(["-q", "generate", "--config", cfg, "--out", str(tmp_path / "x.csv")]) == 1
    assert "T_range" in capsys.readouterr().err
    assert not (tmp_path / "x.csv").exists()


@pytest.mark.parametrize("doc,field", [
    ({"format_version": RUN_FORMAT, "grid": {"temperature": 1}}, "grid"),
    ({"format_version": RUN_FORMAT, "grid": {"T_range": [0.1, 2.0]}}, "grid.T_range"),
    ({"format_version": RUN_FORMAT, "knn": {"k": 0}}, "knn.k"),
    ({"format_version": RUN_FORMAT, "grid": {"model": "dicke"}}, "grid.model"),
    ({"grid": {}}, "format_version"),
    ({"format_version": RUN_FORMAT, "extra": 1}, "<root>"),
])
def test_config_schema_errors(doc, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_run_config(doc)


def test_unknown_config_key_exit_code(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"format_version": RUN_FORMAT, "grid": {"tempertures": [0.1, 2, 5]}}))
    assert main(["-q", "generate", "--config", str(path), "--dry-run"]) == 1
    assert "tempertures" in capsys.readouterr().err


def test_truncation_failure_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", cutoff=12)
    assert main(["-q", "generate", "--config", cfg, "--out", str(tmp_path / "x.csv")]) == 2
    assert "cutoff" in capsys.readouterr().err


# ---------------------------------------------------------------- train / predict

def test_train_fixed_k(small_dataset, tmp_path, capsys):
    model = tmp_path / "m.json"
    assert main(["-q", "train", str(small_dataset), "--k", "5", "--out", str(model)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["k"] == 5 and out["n_train"] == 42
    assert load_model(model).k == 5


def test_train_cv_matches_library(small_dataset, tmp_path, capsys):
    model = tmp_path / "m.json"
    assert main(["-q", "train", str(small_dataset), "--cv", "1,3,5,9", "--out", str(model)]) == 0
    out = json.loads(capsys.readouterr().out)
    ds, _ = read_dataset(small_dataset)
    train, _ = split(ds, 0.7, 20211, 0.03)
    best, scores = cross_validate(train, [1, 3, 5, 9], 5, 20211)
    assert out["k"] == best
    assert [out["cv_scores"][str(k)] for k in (1, 3, 5, 9)] == scores.tolist()


def test_retrain_is_byte_identical(small_dataset, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for m in (a, b):
        assert main(["-q", "train", str(small_dataset), "--out", str(m)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_predict_training_row_recovers_temperature(small_dataset, tmp_path, capsys):
    model = tmp_path / "m.json"
    main(["-q", "train", str(small_dataset), "--k", "1", "--no-split", "--out", str(model)])
    capsys.readouterr()
    ds, _ = read_dataset(small_dataset)
    vec = ",".join(format(v, ".17g") for v in ds.features[17])
    assert main(["-q", "predict", str(model), f"--vector={vec}"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "label,temperature"
    assert float(lines[1].split(",")[1]) == ds.temperatures[17]


def test_predict_wrong_length_exit_code(small_dataset, tmp_path, capsys):
    model = tmp_path / "m.json"
    main(["-q", "train", str(small_dataset), "--out", str(model)])
    capsys.readouterr()
    assert main(["-q", "predict", str(model), "--vector", "0.1,0.2"]) == 2
    assert "N_d=7" in capsys.readouterr().err


def test_predict_needs_input(small_dataset, tmp_path):
    model = tmp_path / "m.json"
    main(["-q", "train", str(small_dataset), "--out", str(model)])
    assert main(["-q", "predict", str(model)]) == 1


def test_malformed_dataset_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["-q", "train", str(bad)]) == 2
    assert "malformed" in capsys.readouterr().err


def test_k_and_cv_are_exclusive(small_dataset):
    with pytest.raises(SystemExit):
        main(["train", str(small_dataset), "--k", "3", "--cv", "1,3"])


# ---------------------------------------------------------------- composability

def test_pipeline_matches_evaluate(small_dataset, tmp_path, capsys):
    model, val, preds, rep = (tmp_path / n for n in ("m.json", "v.csv", "p.csv", "rep"))
    assert main(["-q", "train", str(small_dataset), "--out", str(model),
                 "--validation-out", str(val)]) == 0
    assert main(["-q", "predict", str(model), "--observations", str(val), "--out", str(preds)]) == 0
    capsys.readouterr()
    assert main(["-q", "evaluate", str(small_dataset), "--out", str(rep)]) == 0
    summary = json.loads(capsys.readouterr().out)
    report = json.loads((rep / "report.json").read_text())
    piped = np.loadtxt(preds, delimiter=",", skiprows=1, ndmin=2)[:, 1]
    assert piped.tolist() == [p[0] for p in report["pairs"]]
    assert summary["n_val"] == 18
    # scoring the saved model gives the same number
    assert main(["-q", "evaluate", str(small_dataset), "--model", str(model)]) == 0
    assert json.loads(capsys.readouterr().out)["mse"] == summary["mse"]


def test_cv_command(small_dataset, capsys):
    assert main(["-q", "cv", str(small_dataset), "--cv", "1,3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "k,score" and [l.split(",")[0] for l in lines[1:]] == ["1", "3"]


def test_reproduce_scatter_is_composable(tmp_path, capsys):
    out = tmp_path / "fig"
    assert main(["-q", "reproduce", "2a", "--out", str(out)]) == 0
    cfg = out / "2a_baseline_nd3_config.json"
    data, model, val, preds = (tmp_path / n for n in ("d.csv", "m.json", "v.csv", "p.csv"))
    assert main(["-q", "generate", "--config", str(cfg), "--out", str(data)]) == 0
    assert main(["-q", "train", str(data), "--config", str(cfg), "--out", str(model),
                 "--validation-out", str(val)]) == 0
    assert main(["-q", "predict", str(model), "--observations", str(val), "--out", str(preds)]) == 0
    piped = np.loadtxt(preds, delimiter=",", skiprows=1)[:, 1]
    scatter = np.loadtxt(out / "2a_baseline_nd3.csv", delimiter=",", skiprows=1)
    assert piped.tolist() == scatter[:, 1].tolist()


def test_reproduce_unknown_figure(tmp_path, capsys):
    assert main(["-q", "reproduce", "9z", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "2a" in err and "3h" in err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "probetherm", "-q", "generate", "--dry-run"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["rows"] == 100_000
