import os

import numpy as np
import pytest

from conftest import make_blobs
from pllkit.cli import run
from pllkit.formats import (
    read_candidates_file,
    read_labels_file,
    write_labels_file,
    write_matrix_file,
)
from pllkit.metrics import read_report

CONFIG_TEMPLATE = """\
[paths]
features = "features.pllf"
labels = "labels.plly"
text_embeddings = "text.pllf"
out_dir = "{out_dir}"
eval_features = "eval_features.pllf"
eval_labels = "eval_labels.plly"

[gen]
strategy = "fps"
eta = 0.4
seed = 3

{filter_section}
[train]
objective = "cc"
epochs = 3
lr = 0.05
seed = 1
text_init = true

[eval]
per_class_csv = true
"""


def write_fixture(root, out_dir="out", with_filter=True):
    X, y, means = make_blobs(40, 6, 12, seed=0, sep=6.0)
    Xe, ye, _ = make_blobs(20, 6, 12, seed=1, sep=6.0)
    write_matrix_file(X, root / "features.pllf")
    write_labels_file(y, 6, root / "labels.plly")
    write_matrix_file(means / np.linalg.norm(means, axis=1, keepdims=True),
                      root / "text.pllf")
    write_matrix_file(Xe, root / "eval_features.pllf")
    write_labels_file(ye, 6, root / "eval_labels.plly")
    filter_section = '[filter]\nk = 3\n' if with_filter else ""
    config = root / "exp.toml"
    config.write_text(
        CONFIG_TEMPLATE.format(out_dir=out_dir, filter_section=filter_section)
    )
    return config


def read_all_outputs(out_dir):
    return {
        name: (out_dir / name).read_bytes()
        for name in sorted(os.listdir(out_dir))
    }


class TestPipeline:
    def test_smoke(self, tmp_path):
        config = write_fixture(tmp_path)
        assert run(["pipeline", "--config", str(config)]) == 0
        out = tmp_path / "out"
        assert (out / "model.pllm").exists()
        assert (out / "report.txt").exists()
        assert (out / "eval_report.txt").exists()
        report = read_report(out / "eval_report.txt")
        assert report["overall_acc"] > 0.8
        manifest = (out / "manifest.log").read_text().splitlines()
        assert [line.split()[0] for line in manifest] == [
            "stage=gen", "stage=filter", "stage=train", "stage=eval",
        ]

    def test_missing_features_exits_2(self, tmp_path, capsys):
        config = write_fixture(tmp_path)
        os.remove(tmp_path / "features.pllf")
        code = run(["pipeline", "--config", str(config)])
        assert code == 2
        assert "features.pllf" in capsys.readouterr().err

    def test_byte_identical_reruns(self, tmp_path):
        config = write_fixture(tmp_path)
        assert run(["pipeline", "--config", str(config)]) == 0
        first = read_all_outputs(tmp_path / "out")
        assert run(["pipeline", "--config", str(config)]) == 0
        second = read_all_outputs(tmp_path / "out")
        assert first == second

    def test_eta_override_reflected(self, tmp_path):
        config = write_fixture(tmp_path)
        assert run(["pipeline", "--config", str(config)]) == 0
        base_bits = read_candidates_file(tmp_path / "out" / "candidates.pllc")
        assert run(["pipeline", "--config", str(config), "--eta", "0.9"]) == 0
        over_bits = read_candidates_file(tmp_path / "out" / "candidates.pllc")
        manifest = (tmp_path / "out" / "manifest.log").read_text()
        assert "overrides=eta=0.9" in manifest
        assert over_bits.sum() > base_bits.sum()

    def test_filter_changes_train_input_hash(self, tmp_path):
        cfg_with = write_fixture(tmp_path, out_dir="with_filter", with_filter=True)
        assert run(["pipeline", "--config", str(cfg_with)]) == 0
        with_lines = (tmp_path / "with_filter" / "manifest.log").read_text().splitlines()

        cfg_without = write_fixture(tmp_path, out_dir="no_filter", with_filter=False)
        assert run(["pipeline", "--config", str(cfg_without)]) == 0
        without_lines = (tmp_path / "no_filter" / "manifest.log").read_text().splitlines()

        train_with = next(l for l in with_lines if l.startswith("stage=train"))
        train_without = next(l for l in without_lines if l.startswith("stage=train"))
        assert "candidates_filtered.pllc" in train_with
        assert "candidates_filtered.pllc" not in train_without
        assert train_with.split(" in=")[1] != train_without.split(" in=")[1]


class TestStages:
    def test_gen_standalone(self, tmp_path):
        config = write_fixture(tmp_path)
        assert run(["gen", "--config", str(config)]) == 0
        bits = read_candidates_file(tmp_path / "out" / "candidates.pllc")
        labels, k = read_labels_file(tmp_path / "labels.plly")
        assert bits.shape == (labels.size, k)
        assert bits[np.arange(labels.size), labels].all()

    def test_gen_gamma_subsamples(self, tmp_path):
        config = write_fixture(tmp_path)
        assert run(["gen", "--config", str(config), "--gamma", "4.0"]) == 0
        labels, k = read_labels_file(tmp_path / "out" / "labels.plly")
        counts = np.bincount(labels, minlength=k)
        assert counts[0] == 40 and counts[-1] == 10
        assert (tmp_path / "out" / "features.pllf").exists()

    def test_filter_shrinks_candidates(self, tmp_path):
        config = write_fixture(tmp_path)
        assert run(["gen", "--config", str(config)]) == 0
        before = read_candidates_file(tmp_path / "out" / "candidates.pllc")
        assert run(["filter", "--config", str(config)]) == 0
        after = read_candidates_file(tmp_path / "out" / "candidates_filtered.pllc")
        assert after.sum() <= before.sum()
        assert after.sum(axis=1).max() <= 3

    def test_bad_config_key_exits_2(self, tmp_path, capsys):
        config = write_fixture(tmp_path)
        config.write_text(config.read_text() + "\n[gen2]\nx = 1\n")
        assert run(["pipeline", "--config", str(config)]) == 2
        assert "gen2" in capsys.readouterr().err

    def test_invalid_threads_env_exits_2(self, tmp_path, monkeypatch, capsys):
        config = write_fixture(tmp_path)
        monkeypatch.setenv("PLL_THREADS", "lots")
        assert run(["gen", "--config", str(config)]) == 2
        assert "PLL_THREADS" in capsys.readouterr().err

    def test_objective_override(self, tmp_path):
        config = write_fixture(tmp_path)
        assert run(["pipeline", "--config", str(config), "--objective", "proden"]) == 0
        report = read_report(tmp_path / "out" / "report.txt")
        assert report["objective"] == "proden"

    def test_numerical_error_exits_3(self, tmp_path, monkeypatch, capsys):
        import pllkit.cli as cli_mod
        from pllkit.errors import NumericalError

        config = write_fixture(tmp_path)
        assert run(["gen", "--config", str(config)]) == 0

        def explode(*args, **kwargs):
            raise NumericalError("non-finite gradient for weights")

        monkeypatch.setattr(cli_mod, "fit", explode)
        assert run(["train", "--config", str(config)]) == 3
        assert "non-finite" in capsys.readouterr().err
