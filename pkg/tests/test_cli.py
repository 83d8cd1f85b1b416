import json
import subprocess
import sys

import numpy as np
import pytest

from coalscreen import FeatureTable
from coalscreen.cli import main
from conftest import six_tender_csv

FAST = {"learners": {"forest": {"n_trees": 30}, "lasso": {"folds": 3, "n_lambda": 10}, "svm": {"folds": 3}}}


@pytest.fixture
def market(tmp_path):
    path = tmp_path / "market.csv"
    assert main(["synth", "acceptance", "-o", str(path), "--n-tenders", "120"]) == 0
    return path


@pytest.fixture
def features(tmp_path, market):
    out = tmp_path / "features.csv"
    assert main(["features", str(market), "-o", str(out)]) == 0
    return out


def write_config(tmp_path, **extra):
    cfg = tmp_path / "run.json"
    blob = {"experiment": {**FAST, "reps": 2, **extra.pop("experiment", {})}, **extra}
    cfg.write_text(json.dumps(blob))
    return cfg


def test_validate(tmp_path, capsys):
    p = tmp_path / "bids.csv"
    p.write_text(six_tender_csv())
    assert main(["validate", str(p)]) == 0
    assert "23" in capsys.readouterr().out


def test_validate_column_mapping(tmp_path):
    p = tmp_path / "bids.csv"
    p.write_text(six_tender_csv().replace("tender_id", "contract", 1))
    assert main(["validate", str(p)]) == 1
    assert main(["validate", str(p), "--column", "tender_id=contract"]) == 0
    assert main(["validate", str(p), "--column", "oops"]) == 1


def test_bad_input_exit_codes(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "missing.csv")]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("tender_id,firm_id,bid\nT1,F1,-4\n")
    assert main(["validate", str(bad)]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["nonsense"]) == 1
    assert main(["--help"]) == 0


def test_features_arity(tmp_path, market):
    base, ext, quad = tmp_path / "b.csv", tmp_path / "e.csv", tmp_path / "q.csv"
    assert main(["features", str(market), "-o", str(base)]) == 0
    assert main(["features", str(market), "-o", str(ext), "--stats", "extended"]) == 0
    assert main(["features", str(market), "-o", str(quad), "--k", "4", "--min-joint", "2"]) == 0
    assert len(FeatureTable.from_csv(base).feature_names) == 36
    assert len(FeatureTable.from_csv(ext).feature_names) == 90
    q = FeatureTable.from_csv(quad)
    assert q.members and all(len(m) == 4 for m in q.members)
    echo = json.loads((tmp_path / "b.config.json").read_text())
    assert echo["command"] == "features" and echo["experiment"]["k"] == 3


def test_evaluate_outputs_and_byte_identical_reruns(tmp_path, features):
    cfg = write_config(tmp_path)
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["evaluate", str(features), "--config", str(cfg), "--output-dir", str(out)]) == 0
        runs.append(out)
    for f in ("report.json", "tables.csv", "importance.csv", "class_medians.csv"):
        assert (runs[0] / f).read_bytes() == (runs[1] / f).read_bytes()
    report = json.loads((runs[0] / "report.json").read_text())
    assert report["config"]["reps"] == 2
    assert set(report["summary"]) == {"lasso", "forest", "svm", "super"}


def test_evaluate_subsets(tmp_path, features):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    assert main(["evaluate", str(features), "--config", str(cfg), "--output-dir", str(out), "--algorithms",
                 "tree", "--screens", "asymmetry-only", "--drop-screens", "diffp,absdiff"]) == 0
    assert len(json.loads((out / "report.json").read_text())["feature_names"]) == 16
    assert main(["evaluate", str(features), "--config", str(cfg), "--output-dir", str(out), "--algorithms",
                 "tree", "--columns", "cv_median,bogus"]) == 1
    assert main(["evaluate", str(features), "--config", str(cfg), "--algorithms", "knn"]) == 1
    assert main(["evaluate", str(features), "--config", str(cfg), "--train-fraction", "1.5"]) == 1


def test_env_and_flag_precedence(tmp_path, features, monkeypatch):
    cfg = write_config(tmp_path, output_dir=str(tmp_path / "from_config"))
    monkeypatch.setenv("COALSCREEN_OUTPUT_DIR", str(tmp_path / "from_env"))
    monkeypatch.setenv("COALSCREEN_WORKERS", "2")
    assert main(["evaluate", str(features), "--config", str(cfg), "--algorithms", "tree"]) == 0
    report = json.loads((tmp_path / "from_env" / "report.json").read_text())
    assert report["config"]["workers"] == 2
    assert main(["evaluate", str(features), "--config", str(cfg), "--algorithms", "tree", "--workers", "1",
                 "--output-dir", str(tmp_path / "from_flag")]) == 0
    assert json.loads((tmp_path / "from_flag" / "report.json").read_text())["config"]["workers"] == 1
    assert not (tmp_path / "from_config").exists()
    monkeypatch.setenv("COALSCREEN_WORKERS", "many")
    assert main(["evaluate", str(features), "--config", str(cfg)]) == 1


def test_bad_config(tmp_path, features):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert main(["evaluate", str(features), "--config", str(cfg)]) == 1
    cfg.write_text(json.dumps({"surprise": 1}))
    assert main(["evaluate", str(features), "--config", str(cfg)]) == 1


def test_synth_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["synth", "partial", "-o", str(a), "--seed", "3"]) == 0
    assert main(["synth", "partial", "-o", str(b), "--seed", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["synth", "nope"]) == 1
    assert "complete" in capsys.readouterr().err
    assert main(["synth", "complete", "--n-firms", "2"]) == 1


def test_score(tmp_path, features):
    cfg = write_config(tmp_path)
    model = tmp_path / "model.json"
    out = tmp_path / "eval"
    assert main(["evaluate", str(features), "--config", str(cfg), "--output-dir", str(out), "--algorithms",
                 "forest", "--save-model", str(model)]) == 0
    scored = tmp_path / "scores.csv"
    assert main(["score", str(features), str(model), "-o", str(scored)]) == 0
    lines = scored.read_text().splitlines()
    table = FeatureTable.from_csv(features)
    assert lines[0] == "coalition_id,probability,predicted"
    assert len(lines) == len(table) + 1
    p = np.array([float(r.split(",")[1]) for r in lines[1:]])
    assert np.all((p >= 0) & (p <= 1))

    narrow = tmp_path / "narrow.csv"
    narrow.write_text(table.select(list(table.feature_names[:10])).to_csv())
    assert main(["score", str(narrow), str(model)]) == 1


def test_internal_error_exit_code(tmp_path, features, monkeypatch):
    import coalscreen.cli as cli

    def boom(*a, **k):
        raise RuntimeError("kaput")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert main(["evaluate", str(features), "--output-dir", str(tmp_path)]) == 2


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "coalscreen.cli", "synth", "complete", "--n-tenders", "5"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0
    assert r.stdout.startswith("tender_id,firm_id,bid,rigged_flag")
