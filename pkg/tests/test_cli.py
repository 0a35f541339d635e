import csv
import json
from pathlib import Path

import numpy as np
import pytest

from passglm.cli import ConfigError, ExperimentConfig, main


def run(args):
    return main([str(a) for a in args])


SMALL = ["--n", "40", "--N", "200", "--p", "10", "--test-size", "80",
         "--seed", "11"]


class TestConfig:
    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_dict({"scenario": "I", "bogus": 1})

    def test_method_validation(self):
        with pytest.raises(ConfigError, match="unknown method"):
            ExperimentConfig.from_dict({"methods": ["lasso", "xgboost"]})

    def test_scenario_validation(self):
        with pytest.raises(ConfigError, match="unknown scenario"):
            ExperimentConfig.from_dict({"scenario": "X"})

    def test_mis_scenario_needs_block(self):
        with pytest.raises(ConfigError, match="p >= 20"):
            ExperimentConfig.from_dict({"scenario": "iii", "p": 10})

    def test_hash_is_stable(self):
        a = ExperimentConfig.from_dict({"scenario": "I"})
        b = ExperimentConfig.from_dict({"scenario": "I"})
        assert a.sha256() == b.sha256()


class TestSimulate:
    def test_outputs_and_determinism(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run(["simulate", "--scenario", "I", *SMALL,
                    "--out", out1]) == 0
        assert run(["simulate", "--scenario", "I", *SMALL,
                    "--out", out2]) == 0
        for name in ("train.csv", "test.csv", "oracle.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        manifest = json.loads((out1 / "manifest.json").read_text())
        assert "config_sha256" in manifest
        resolved = json.loads((out1 / "resolved_config.json").read_text())
        assert resolved["scenario"] == "I"

    def test_precondition_failure_exit_code(self, tmp_path, capsys):
        code = run(["simulate", "--scenario", "iii", "--p", "10",
                    "--out", tmp_path / "x"])
        assert code == 2

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as exc:
            run(["frobnicate"])
        assert exc.value.code == 1


class TestFitAndEvaluate:
    def test_fit_writes_model_and_caches_alpha(self, tmp_path, capsys):
        out = tmp_path / "fit"
        assert run(["fit", "--scenario", "I", *SMALL, "--method", "pass",
                    "--out", out]) == 0
        blob = json.loads((out / "model_pass.json").read_text())
        assert len(blob["beta"]) == 10
        first = capsys.readouterr().err
        assert "alpha cache write" in first
        assert run(["fit", "--scenario", "I", *SMALL, "--method", "pass",
                    "--out", out]) == 0
        second = capsys.readouterr().err
        assert "alpha cache hit" in second

    def test_fit_needs_unlabeled_rows_for_ulasso(self, tmp_path):
        out = tmp_path / "sim"
        run(["simulate", "--scenario", "I", *SMALL, "--out", out])
        # relabel every row so no unlabeled remain
        rows = list(csv.reader(open(out / "train.csv")))
        for row in rows[1:]:
            if row[0] == "":
                row[0] = "0"
        with open(out / "all_labeled.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        code = run(["fit", "--method", "ulasso",
                    "--real-data", out / "all_labeled.csv",
                    "--out", tmp_path / "ul"])
        assert code == 2

    def test_fit_then_evaluate_roundtrip(self, tmp_path):
        sim = tmp_path / "sim"
        run(["simulate", "--scenario", "I", *SMALL, "--out", sim])
        fit = tmp_path / "fit"
        assert run(["fit", "--method", "lasso", "--real-data",
                    sim / "train.csv", "--out", fit]) == 0
        out = tmp_path / "eval"
        assert run(["evaluate", "--model", fit / "model_lasso.json",
                    "--test-csv", sim / "test.csv", "--out", out]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert 0.5 <= metrics["auc"] <= 1.0
        assert metrics["bss"] is not None


class TestBench:
    def test_smoke_run_produces_rows(self, tmp_path):
        out = tmp_path / "bench"
        assert run(["bench", "--scenario", "I", *SMALL, "--reps", "2",
                    "--methods", "lasso,ss_prior,pass", "--out", out]) == 0
        with open(out / "results.csv") as fh:
            rows = list(csv.DictReader(fh))
        # 2 replicates x 3 methods x 3 metrics (auc, er, mse_p)
        assert len(rows) == 18
        assert {r["method"] for r in rows} == {"lasso", "ss_prior", "pass"}
        assert {r["metric"] for r in rows} == {"auc", "er", "mse_p"}
        assert {r["replicate"] for r in rows} == {"1", "2"}
        summary = json.loads((out / "summary.json").read_text())
        assert summary["paired_folds"] is True
        assert "pass" in summary["methods"]
        for metric in ("auc", "er", "mse_p"):
            assert (out / f"boxplot_{metric}.svg").exists()

    def test_csv_schema_columns(self, tmp_path):
        out = tmp_path / "bench2"
        run(["bench", "--scenario", "I", *SMALL, "--reps", "1",
             "--methods", "lasso", "--out", out])
        header = open(out / "results.csv").readline().strip().split(",")
        assert header == ["replicate", "method", "metric", "value", "n",
                          "N", "p", "scenario", "seed"]

    def test_real_data_mode(self, tmp_path):
        sim = tmp_path / "sim"
        run(["simulate", "--scenario", "I", "--n", "60", "--N", "200",
             "--p", "10", "--test-size", "50", "--seed", "5", "--out", sim])
        out = tmp_path / "realbench"
        cfg = {
            "train_csv": str(sim / "train.csv"),
            "n": 30,
            "methods": ["lasso", "ss_prior"],
            "eval_folds": 2,
            "label_resamples": 1,
            "outer_reps": 1,
            "n_folds": 5,
            "out": str(out),
            "seed": 1,
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert run(["bench", "--config", cfg_path]) == 0
        with open(out / "results.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["metric"] for r in rows} == {"auc", "bss"}
        assert {r["method"] for r in rows} == {"lasso", "ss_prior"}
