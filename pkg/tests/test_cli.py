"""End-to-end runs of the command-line entry point."""

import numpy as np
import pandas as pd
import pytest
import toml

from conftest import small_config_dict
from main import main


@pytest.fixture
def write_config(tmp_path):
    def _write(name="run.toml", **overrides):
        path = tmp_path / name
        path.write_text(toml.dumps(small_config_dict(tmp_path, **overrides)), encoding="utf-8")
        return path
    return _write


def _pretrained_checkpoint(write_config, tmp_path, **overrides):
    config = write_config(**overrides)
    out = tmp_path / "trained"
    assert main(["pretrain", "--config", str(config), "--out", str(out)]) == 0
    return config, out / "checkpoints" / "final.npz"


class TestPretrainCommand:
    def test_writes_outputs(self, write_config, tmp_path):
        config = write_config()
        assert main(["pretrain", "--config", str(config)]) == 0
        out = tmp_path / "out"
        for name in ("metrics.csv", "resolved_config.toml", "checkpoints/final.npz", "logs/run.log"):
            assert (out / name).exists(), name

    def test_zero_epochs_writes_initial_checkpoint(self, write_config, tmp_path):
        config = write_config(train={"epochs": 0})
        assert main(["pretrain", "--config", str(config)]) == 0
        assert (tmp_path / "out" / "checkpoints" / "final.npz").exists()

    def test_batch_size_one_is_rejected(self, write_config, capsys):
        config = write_config(train={"batch_size": 1})
        assert main(["pretrain", "--config", str(config)]) == 2
        assert "batch_size" in capsys.readouterr().err

    def test_unknown_key_is_rejected(self, write_config, capsys):
        config = write_config(train={"learning_rate": 0.1})
        assert main(["pretrain", "--config", str(config)]) == 2
        assert "learning_rate" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["pretrain", "--config", str(tmp_path / "absent.toml")]) == 2

    def test_runs_are_reproducible(self, write_config, tmp_path):
        config = write_config()
        assert main(["pretrain", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
        assert main(["pretrain", "--config", str(config), "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()

    def test_resolved_config_reproduces_run(self, write_config, tmp_path):
        config = write_config()
        assert main(["pretrain", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
        echoed = tmp_path / "a" / "resolved_config.toml"
        assert main(["pretrain", "--config", str(echoed), "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
        resolved = toml.load(echoed)
        assert resolved["dataset"]["seed"] is not None and resolved["policy"]["seed"] is not None

    def test_seed_override_changes_run(self, write_config, tmp_path):
        config = write_config()
        assert main(["pretrain", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
        assert main(["pretrain", "--config", str(config), "--out", str(tmp_path / "b"), "--seed", "9"]) == 0
        assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "b" / "metrics.csv").read_bytes()


class TestEvalCommand:
    def test_missing_checkpoint(self, write_config, tmp_path):
        config = write_config()
        assert main(["eval", "--config", str(config), "--checkpoint", str(tmp_path / "none.npz")]) == 2

    def test_eval_trained_checkpoint(self, write_config, tmp_path):
        config, checkpoint = _pretrained_checkpoint(write_config, tmp_path)
        assert main(["eval", "--config", str(config), "--checkpoint", str(checkpoint)]) == 0
        frame = pd.read_csv(tmp_path / "out" / "eval.csv")
        assert 0.0 <= frame["probe_accuracy"][0] <= 1.0
        assert 0.0 <= frame["knn_accuracy"][0] <= 1.0

    def test_topology_mismatch(self, write_config, tmp_path, capsys):
        _, checkpoint = _pretrained_checkpoint(write_config, tmp_path)
        other = write_config(name="other.toml", model={"encoder_widths": [12, 6]})
        assert main(["eval", "--config", str(other), "--checkpoint", str(checkpoint)]) == 2
        assert "checkpoint/model topology mismatch" in capsys.readouterr().err


class TestCompareCommand:
    def test_single_seed_is_rejected(self, write_config):
        config = write_config(compare={"seeds": [0]})
        assert main(["compare", "--config", str(config)]) == 2

    def test_writes_report(self, write_config, tmp_path):
        config = write_config(
            train={"epochs": 1, "batch_size": 30},
            eval={"probe_epochs": 10, "knn_k": 3},
            compare={"seeds": [0, 1, 2], "policies": [{"name": "byol", "kind": "none", "lambda": 0.0},
                                                       {"name": "random", "kind": "random"}]},
        )
        assert main(["compare", "--config", str(config)]) == 0
        report = pd.read_csv(tmp_path / "out" / "report.csv")
        assert list(report["policy"]) == ["random_encoder", "byol", "random"]
        assert (tmp_path / "out" / "report.txt").exists()
        assert len(pd.read_csv(tmp_path / "out" / "cells.csv")) == 9


class TestTracInDumpCommand:
    def test_duplicate_row_is_argmax(self, write_config, tmp_path):
        overrides = {"augment": {"strong": {"rotation_choices": [0]}, "light": {"hflip_p": 0.0}}}
        config, checkpoint = _pretrained_checkpoint(write_config, tmp_path, **overrides)
        out = tmp_path / "dump"
        base = ["tracin-dump", "--config", str(config), "--checkpoint", str(checkpoint), "--out", str(out)]

        assert main(base + ["--rows", "0,1,2,3,4,5"]) == 0
        scores = pd.read_csv(out / "tracin_matrix.csv").drop(columns="anchor").to_numpy()
        dominant = int(np.argmax(np.diag(scores)))

        assert main(base + ["--rows", f"0,1,2,3,4,5,{dominant}"]) == 0
        matrix = pd.read_csv(out / "tracin_matrix.csv").drop(columns="anchor").to_numpy()
        row = matrix[dominant].copy()
        row[dominant] = -np.inf
        assert int(np.argmax(row)) == 6
        selections = pd.read_csv(out / "tracin_selections.csv")
        assert int(selections.loc[selections["anchor"] == dominant, "selected"].iloc[0]) == 6

    def test_batch_size_flag(self, write_config, tmp_path):
        config, checkpoint = _pretrained_checkpoint(write_config, tmp_path)
        out = tmp_path / "dump"
        assert main(["tracin-dump", "--config", str(config), "--checkpoint", str(checkpoint),
                     "--out", str(out), "--batch-size", "5"]) == 0
        assert pd.read_csv(out / "tracin_matrix.csv").shape == (5, 6)
