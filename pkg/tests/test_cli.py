"""CLI workflows end to end: exit codes, run directories, determinism."""

import json

import numpy as np
import pytest

from krd.cli import headline_accuracy, main, parse_prob_model, write_aggregate
from krd.errors import ParameterError
from krd.report import RunMetrics

# keep CLI-driven training cheap: tiny graph, few epochs
FAST = [
    "--epochs", "25", "--teacher-epochs", "40", "--hidden", "8",
    "--lr", "0.02", "--teacher-lr", "0.02", "--patience", "0",
    "--teacher-patience", "0", "--train-per-class", "4",
    "--val-size", "9", "--test-size", "12", "--samples", "4",
]


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("bundles") / "synth"
    rc = main(["synth", "--nodes", "40", "--classes", "3", "--intra", "0.4",
               "--inter", "0.02", "--noise", "0.6", "--seed", "13",
               "--out", str(root)])
    assert rc == 0
    return root


class TestSynthAndValidate:
    def test_synth_then_validate(self, bundle_dir, capsys):
        assert main(["validate", str(bundle_dir)]) == 0
        out = capsys.readouterr().out
        assert "ok" in out and "N=40" in out

    def test_validate_missing_bundle_exits_2(self, tmp_path, capsys):
        rc = main(["validate", str(tmp_path / "nope")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_corrupted_features_exits_2_and_names_file(self, tmp_path, capsys):
        import shutil

        src = None
        rc = main(["synth", "--nodes", "12", "--classes", "3",
                   "--out", str(tmp_path / "b")])
        assert rc == 0
        (tmp_path / "b" / "features.bin").write_bytes(b"\x00" * 7)
        rc = main(["validate", str(tmp_path / "b")])
        assert rc == 2
        assert "features.bin" in capsys.readouterr().err


class TestExitCodes:
    def test_usage_error_is_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["distill", "--method", "bogus", "--bundle", "x"])
        assert exc.value.code == 1

    def test_missing_subcommand_is_1(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1

    def test_bad_parameter_is_1(self, bundle_dir, tmp_path, capsys):
        rc = main(["distill", "--bundle", str(bundle_dir), "--out", str(tmp_path),
                   "--run-name", "r", "--lam", "3.0", *FAST])
        assert rc == 1
        assert "lam" in capsys.readouterr().err

    def test_bad_prob_model_is_1(self, bundle_dir, tmp_path, capsys):
        rc = main(["distill", "--bundle", str(bundle_dir), "--out", str(tmp_path),
                   "--run-name", "r", "--prob-model", "cubic", *FAST])
        assert rc == 1

    def test_missing_config_file_is_2(self, tmp_path, capsys):
        rc = main(["distill", "--config", str(tmp_path / "none.json")])
        assert rc == 2

    def test_unknown_config_key_is_1(self, tmp_path, bundle_dir, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"bundle": str(bundle_dir), "warp_speed": 9}))
        rc = main(["distill", "--config", str(cfg)])
        assert rc == 1
        assert "warp_speed" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_divergence_is_3(self, bundle_dir, tmp_path, capsys):
        # a huge learning rate blows the loss up to inf within a few steps
        rc = main(["distill", "--bundle", str(bundle_dir), "--out", str(tmp_path),
                   "--run-name", "r", "--method", "mlp", "--lr", "1e18",
                   "--teacher-epochs", "2", "--epochs", "40", "--hidden", "8",
                   "--patience", "0", "--teacher-patience", "0",
                   "--train-per-class", "4", "--val-size", "9",
                   "--test-size", "12"])
        assert rc == 3
        err = capsys.readouterr().err
        assert "diverged" in err or "non-finite" in err


class TestDistillCommand:
    def test_krd_run_directory_layout(self, bundle_dir, tmp_path, capsys):
        out = tmp_path / "runs"
        rc = main(["distill", "--bundle", str(bundle_dir), "--out", str(out),
                   "--run-name", "krdrun", "--method", "krd", "--seeds", "0,1",
                   *FAST])
        assert rc == 0
        base = out / "krdrun"
        for seed in (0, 1):
            run = base / f"krd-seed{seed}"
            assert (run / "config.json").is_file()
            assert (run / "history.csv").is_file()
            assert (run / "metrics.json").is_file()
            assert (run / "student" / "meta.json").is_file()
            assert (base / f"teacher-seed{seed}" / "weights.bin").is_file()
            doc = json.loads((run / "metrics.json").read_text())
            assert 0.0 <= doc["split_accuracy"]["test"] <= 1.0
            assert doc["seed"] == seed
            assert len(doc["config_hash"]) == 64
            assert "teacher" in doc["dirichlet_energy"]
            assert "student" in doc["dirichlet_energy"]
        agg = (base / "aggregate.csv").read_text().splitlines()
        assert agg[0] == "variant,param,seed_count,mean_acc,std_acc"
        assert agg[1].startswith("krd,-,2,")

    def test_glnn_and_mlp_methods(self, bundle_dir, tmp_path):
        out = tmp_path / "runs"
        for method in ("glnn", "mlp"):
            rc = main(["distill", "--bundle", str(bundle_dir), "--out", str(out),
                       "--run-name", method, "--method", method, *FAST])
            assert rc == 0
            run = out / method / f"{method}-seed0"
            doc = json.loads((run / "config.json").read_text())
            assert doc["method"] == method
            if method == "mlp":
                assert doc["lam"] == 1.0

    def test_metrics_bit_identical_across_reruns(self, bundle_dir, tmp_path):
        out = tmp_path / "runs"
        argv = ["distill", "--bundle", str(bundle_dir), "--method", "krd",
                "--out", str(out), *FAST]
        assert main(argv + ["--run-name", "a"]) == 0
        assert main(argv + ["--run-name", "b"]) == 0
        a = (out / "a" / "krd-seed0" / "metrics.json").read_bytes()
        b = (out / "b" / "krd-seed0" / "metrics.json").read_bytes()
        assert a == b

    def test_config_file_plus_flag_override(self, bundle_dir, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "bundle": str(bundle_dir), "method": "glnn", "epochs": 10,
            "teacher_epochs": 30, "hidden": 8, "patience": 0,
            "teacher_patience": 0, "train_per_class": 4, "val_size": 9,
            "test_size": 12, "lam": 0.5,
        }))
        out = tmp_path / "runs"
        rc = main(["distill", "--config", str(cfg), "--out", str(out),
                   "--run-name", "cfgd", "--epochs", "12"])
        assert rc == 0
        doc = json.loads((out / "cfgd" / "glnn-seed0" / "config.json").read_text())
        assert doc["epochs"] == 12  # flag wins
        assert doc["lam"] == 0.5  # file value survives

    def test_inductive_mode_reports_inductive_accuracy(self, bundle_dir, tmp_path,
                                                       capsys):
        out = tmp_path / "runs"
        rc = main(["distill", "--bundle", str(bundle_dir), "--out", str(out),
                   "--run-name", "ind", "--method", "krd", "--mode", "inductive",
                   "--inductive-fraction", "0.25", *FAST])
        assert rc == 0
        doc = json.loads((out / "ind" / "krd-seed0" / "metrics.json").read_text())
        assert "inductive" in doc["split_accuracy"]


class TestTeacherAndEval:
    def test_train_teacher_then_eval(self, bundle_dir, tmp_path, capsys):
        out = tmp_path / "runs"
        rc = main(["train-teacher", "--bundle", str(bundle_dir), "--out", str(out),
                   "--run-name", "t", *FAST])
        assert rc == 0
        ck = out / "t" / "teacher-seed0"
        assert (ck / "weights.bin").is_file()
        assert (ck / "history.csv").read_text().startswith("epoch,loss,val_acc")
        capsys.readouterr()

        rc = main(["eval", "--bundle", str(bundle_dir), "--model", str(ck),
                   "--train-per-class", "4", "--val-size", "9",
                   "--test-size", "12", "--out", str(tmp_path / "eval.json")])
        assert rc == 0
        doc = json.loads((tmp_path / "eval.json").read_text())
        assert "split_accuracy" in doc

    def test_quantify_writes_csv(self, bundle_dir, tmp_path, capsys):
        out = tmp_path / "runs"
        main(["train-teacher", "--bundle", str(bundle_dir), "--out", str(out),
              "--run-name", "t2", *FAST])
        ck = out / "t2" / "teacher-seed0"
        csv = tmp_path / "rho.csv"
        rc = main(["quantify", "--bundle", str(bundle_dir), "--teacher", str(ck),
                   "--delta", "0.5", "--samples", "4", "--out", str(csv)])
        assert rc == 0
        lines = csv.read_text().splitlines()
        assert lines[0] == "node_id,rho,rho_normalized,entropy"
        assert len(lines) == 41

    def test_eval_missing_checkpoint_is_2(self, bundle_dir, tmp_path, capsys):
        rc = main(["eval", "--bundle", str(bundle_dir),
                   "--model", str(tmp_path / "ghost")])
        assert rc == 2


class TestSweep:
    def test_tiny_grid_writes_sweep_csv(self, bundle_dir, tmp_path, capsys):
        out = tmp_path / "runs"
        rc = main(["sweep", "--bundle", str(bundle_dir), "--out", str(out),
                   "--run-name", "sw", "--method", "glnn",
                   "--lambdas", "0.3,0.7", *FAST])
        assert rc == 0
        lines = (out / "sw" / "sweep.csv").read_text().splitlines()
        assert lines[0] == "variant,param,seed_count,mean_acc,std_acc"
        assert len(lines) == 3
        assert "lam=0.3" in lines[1] and "lam=0.7" in lines[2]


class TestBench:
    def test_smoke(self, capsys):
        rc = main(["bench", "--values", "20000", "--nodes", "200",
                   "--degree", "4", "--width", "8"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "mix64_block" in out and "csr_matmul" in out
        assert "compiled" in out or "python" in out


class TestHelpers:
    def test_parse_prob_model(self):
        assert parse_prob_model("power-learnable") == ("power_learnable", 1.0)
        assert parse_prob_model("power-fixed:2.5") == ("power_fixed", 2.5)
        assert parse_prob_model("exponential") == ("exponential_learnable", 1.0)
        assert parse_prob_model("gaussian") == ("gaussian_learnable", 1.0)
        with pytest.raises(ParameterError):
            parse_prob_model("power-fixed:zero")
        with pytest.raises(ParameterError):
            parse_prob_model("power-fixed:-1")
        with pytest.raises(ParameterError):
            parse_prob_model("cubic")

    def test_headline_accuracy_prefers_inductive(self):
        m = RunMetrics({"test": 0.5, "inductive": 0.25}, 0.0, 0.0)
        assert headline_accuracy(m) == 0.25
        m2 = RunMetrics({"test": 0.5}, 0.0, 0.0)
        assert headline_accuracy(m2) == 0.5
        with pytest.raises(ParameterError):
            headline_accuracy(RunMetrics({"train": 1.0}, 0.0, 0.0))

    def test_write_aggregate_schema(self, tmp_path):
        path = tmp_path / "agg.csv"
        write_aggregate(path, [("krd", "-", [0.8, 0.9]), ("glnn", "-", [0.7])])
        lines = path.read_text().splitlines()
        assert lines[0] == "variant,param,seed_count,mean_acc,std_acc"
        assert lines[1] == "krd,-,2,0.850000,0.070711"
        assert lines[2] == "glnn,-,1,0.700000,0.000000"
