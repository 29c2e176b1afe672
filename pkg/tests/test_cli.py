import json

import numpy as np
import pytest

from octsvm.cli import main


@pytest.fixture
def separable_csv(tmp_path):
    rng = np.random.default_rng(6)
    x = np.concatenate([rng.uniform(0, 0.35, 8), rng.uniform(0.65, 1.0, 8)])
    path = tmp_path / "sep.csv"
    with open(path, "w") as fh:
        fh.write("x,label\n")
        for xi in x:
            fh.write(f"{xi:.6f},{1 if xi >= 0.5 else 0}\n")
    return str(path)


class TestTrainPredict:
    def test_cart_roundtrip(self, separable_csv, tmp_path):
        model = str(tmp_path / "model.json")
        preds = str(tmp_path / "preds.txt")
        assert main(["train", "--data", separable_csv, "--method", "CART",
                     "--alpha", "0.001", "--depth", "3", "--out", model]) == 0
        payload = json.load(open(model))
        assert payload["kind"] == "cart" and "scaling" in payload
        assert main(["predict", "--model", model, "--data", separable_csv,
                     "--out", preds]) == 0
        labels = [int(v) for v in open(preds).read().split()]
        assert labels == [-1] * 8 + [1] * 8

    def test_octsvm_roundtrip(self, separable_csv, tmp_path):
        model = str(tmp_path / "model.json")
        preds = str(tmp_path / "preds.txt")
        assert main(["train", "--data", separable_csv, "--method", "OCTSVM",
                     "--depth", "1", "--c1", "100", "--c2", "100",
                     "--c3", "0.01", "--time-limit", "60",
                     "--out", model]) == 0
        assert main(["predict", "--model", model, "--data", separable_csv,
                     "--out", preds]) == 0
        labels = [int(v) for v in open(preds).read().split()]
        assert labels == [-1] * 8 + [1] * 8

    def test_missing_file_fails_with_diagnostic(self, tmp_path, capsys):
        assert main(["train", "--data", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "m.json")]) == 1
        assert "error:" in capsys.readouterr().err


class TestExperimentVerb:
    def test_runs_spec_file(self, separable_csv, tmp_path):
        spec = tmp_path / "spec.txt"
        spec.write_text(f"dataset_path={separable_csv}\n"
                        "dataset_name=sep\nmethods=CART\n"
                        "flip_fractions=0\nfolds=2\nreplications=1\n"
                        "seed=1\nalpha_grid=0.001\nnode_limit=100\n")
        out = str(tmp_path / "report.csv")
        assert main(["experiment", "--spec", str(spec), "--out", out]) == 0
        text = open(out).read()
        assert "sep,CART" in text and "Average" in text


class TestExportModel:
    def test_lp_text_written(self, separable_csv, tmp_path):
        spec = tmp_path / "spec.txt"
        spec.write_text(f"dataset_path={separable_csv}\nmethods=RESVM\n"
                        "c1_grid=1\nc2_grid=0.1\n")
        out = str(tmp_path / "model.lp")
        assert main(["export-model", "--spec", str(spec), "--out", out]) == 0
        text = open(out).read()
        assert text.startswith("Minimize")
        assert "Binary" in text and text.rstrip().endswith("End")


class TestOracleVerb:
    def test_objectives_agree(self, tmp_path, capsys):
        rng = np.random.default_rng(2)
        path = tmp_path / "tiny.csv"
        with open(path, "w") as fh:
            fh.write("x,label\n")
            for label in (0, 1, 0, 1, 1, 0):
                fh.write(f"{rng.random():.6f},{label}\n")
        assert main(["oracle", "--data", str(path), "--depth", "0",
                     "--c1", "1", "--c2", "0.1", "--time-limit", "60"]) == 0
        out = capsys.readouterr().out
        assert "agree within" in out
