"""Tests for the command-line interface."""

import argparse
import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from apps.cli.src.main import build_parser, main
from apps.cli.src.schemas.synth import load_synth_config
from packages.analysis.src.shape import shape_matrix_from_landmarks, write_shape_matrix
from packages.data.src.blobs import make_blob_volume, make_two_class_set
from packages.data.src.dataset import load_dataset
from packages.registration.src.landmarks import LandmarkSet, load_landmarks, save_landmarks
from packages.tensor.src.io import load_tensor, save_tensor
from packages.training.src.config import load_config

CONFIGS = Path(__file__).resolve().parents[3] / "configs"

TRAIN_CONFIG = {
    "lambda": 1e-4,
    "epochs": 2,
    "learning_rate": 1e-3,
    "pair_strategy": "random",
    "pair_count": 2,
    "split": [0.5, 0.25, 0.25],
    "landmarks": 6,
    "anchors": "corners",
    "arch": [
        {"kind": "conv", "out": 2, "stride": 2},
        {"kind": "relu"},
        {"kind": "dense", "out": 4},
        {"kind": "tanh"},
    ],
}


def _subparsers(parser: argparse.ArgumentParser) -> dict[str, argparse.ArgumentParser]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return dict(action.choices)
    return {}


def _all_parsers(parser: argparse.ArgumentParser, name: str = "morphoscope"):
    yield name, parser
    for child_name, child in _subparsers(parser).items():
        yield from _all_parsers(child, f"{name} {child_name}")


@pytest.fixture(scope="module")
def phantom_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("phantom")
    argv = ["synth", "--count", "6", "--size", "32", "--seed", "7"]
    assert main(argv + ["--out", str(directory)]) == 0
    return directory


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("config") / "train.json"
    path.write_text(json.dumps(TRAIN_CONFIG))
    return path


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, phantom_dir, config_path):
    directory = tmp_path_factory.mktemp("run")
    argv = ["train", "--data", str(phantom_dir), "--config", str(config_path)]
    assert main(argv + ["--epochs", "1", "--seed", "3", "--out", str(directory)]) == 0
    return directory


@pytest.fixture(scope="module")
def shapes_csv(tmp_path_factory):
    classes = make_two_class_set((24, 24), per_class=8, seed=2)
    path = tmp_path_factory.mktemp("shapes") / "shapes.csv"
    labels = [str(label) for label in classes.labels]
    write_shape_matrix(path, shape_matrix_from_landmarks(classes.landmarks, labels=labels))
    return path


class TestHelp:
    """Test that every flag is documented."""

    def test_every_flag_has_help(self):
        for name, parser in _all_parsers(build_parser()):
            text = parser.format_help()
            for action in parser._actions:
                if not action.option_strings or isinstance(action, argparse._HelpAction):
                    continue
                assert action.help, f"{name} {action.option_strings[0]} lacks help"
                for option in action.option_strings:
                    assert option in text, f"{name} --help omits {option}"

    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["cull", "--help"])
        assert excinfo.value.code == 0
        assert "--threshold" in capsys.readouterr().out

    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["synth", "--out", "x", "--bogus"])
        assert excinfo.value.code == 2


class TestSynth:
    """Test dataset generation."""

    def test_phantom_dataset(self, phantom_dir):
        dataset = load_dataset(phantom_dir)
        assert len(dataset.images) == 6
        assert dataset.manifest.kind == "phantom"
        assert dataset.manifest.seed == 7
        assert all(points.shape == (6, 2) for points in dataset.landmarks)

    def test_creates_nested_output(self, tmp_path):
        out = tmp_path / "a" / "b"
        assert main(["synth", "--count", "1", "--size", "32", "--out", str(out)]) == 0
        assert (out / "manifest.json").exists()

    def test_zero_sigma_identical(self, tmp_path):
        argv = ["synth", "--count", "3", "--size", "32", "--sigma", "0", "--out", str(tmp_path)]
        assert main(argv) == 0
        images = load_dataset(tmp_path).images
        assert all(np.array_equal(img.data, images[0].data) for img in images)

    def test_blobs(self, tmp_path):
        argv = ["synth", "--kind", "blobs", "--count", "2", "--size", "16", "--out", str(tmp_path)]
        assert main(argv) == 0
        dataset = load_dataset(tmp_path)
        assert dataset.labels == ["0", "0", "1", "1"]

    def test_config_file_and_flag_precedence(self, tmp_path):
        config = tmp_path / "synth.json"
        config.write_text(json.dumps({"count": 2, "size": 32, "seed": 1}))
        assert main(["synth", "--config", str(config), "--seed", "9", "--out", str(tmp_path)]) == 0
        manifest = load_dataset(tmp_path).manifest
        assert len(manifest.samples) == 2
        assert manifest.seed == 9

    def test_bad_config_key(self, tmp_path, capsys):
        config = tmp_path / "synth.json"
        config.write_text(json.dumps({"cuont": 3}))
        assert main(["synth", "--config", str(config), "--out", str(tmp_path)]) == 2
        assert "cuont" in capsys.readouterr().err

    def test_3d_phantom_rejected(self, tmp_path):
        assert main(["synth", "--ndim", "3", "--out", str(tmp_path)]) == 2


class TestTrain:
    """Test the training command."""

    def test_outputs(self, run_dir):
        assert (run_dir / "checkpoint" / "arch.txt").exists()
        assert (run_dir / "checkpoints" / "epoch_001").is_dir()
        assert not (run_dir / "checkpoints" / "epoch_002").exists()
        log = pd.read_csv(run_dir / "training_log.csv")
        assert list(log["epoch"]) == [1]

    def test_flags_override_file(self, run_dir):
        saved = json.loads((run_dir / "config.json").read_text())
        assert saved["epochs"] == 1
        assert saved["seed"] == 3
        assert saved["lambda"] == 1e-4

    def test_result_summary(self, run_dir):
        result = json.loads((run_dir / "result.json").read_text())
        assert result["landmarks"] == 6
        assert len(result["history"]) == 1

    def test_rerun_identical_checkpoint(self, tmp_path, run_dir, phantom_dir, config_path):
        argv = ["train", "--data", str(phantom_dir), "--config", str(config_path)]
        assert main(argv + ["--epochs", "1", "--seed", "3", "--out", str(tmp_path)]) == 0
        for path in sorted((run_dir / "checkpoint").iterdir()):
            assert (tmp_path / "checkpoint" / path.name).read_bytes() == path.read_bytes()

    def test_bad_config_key(self, tmp_path, phantom_dir, capsys):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"learning_rat": 0.1}))
        argv = ["train", "--data", str(phantom_dir), "--config", str(config)]
        assert main(argv + ["--out", str(tmp_path / "run")]) == 2
        assert "learning_rat" in capsys.readouterr().err

    def test_missing_dataset(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path)]) == 1


class TestDetect:
    """Test landmark detection."""

    def test_reproduces_training_landmarks(self, tmp_path, run_dir, phantom_dir):
        argv = ["detect", "--checkpoint", str(run_dir / "checkpoint"), "--data", str(phantom_dir)]
        assert main(argv + ["--out", str(tmp_path)]) == 0
        recorded = sorted((run_dir / "landmarks").iterdir())
        assert recorded
        for path in recorded:
            expected = load_landmarks(path).points
            assert np.array_equal(load_landmarks(tmp_path / path.name).points, expected)

    def test_shapes_csv(self, tmp_path, run_dir, phantom_dir):
        argv = ["detect", "--checkpoint", str(run_dir / "checkpoint"), "--data", str(phantom_dir)]
        assert main(argv + ["--out", str(tmp_path)]) == 0
        frame = pd.read_csv(tmp_path / "shapes.csv", dtype={"id": str})
        assert len(frame) == 6
        assert list(frame.columns[:4]) == ["id", "label", "x0", "y0"]
        assert frame["id"].iloc[0] == "0000"

    def test_single_image(self, tmp_path, run_dir, phantom_dir):
        image = phantom_dir / "images" / "0002.mstn"
        argv = ["detect", "--checkpoint", str(run_dir / "checkpoint"), "--image", str(image)]
        assert main(argv + ["--out", str(tmp_path)]) == 0
        assert load_landmarks(tmp_path / "0002.txt").K == 6

    def test_wrong_image_size(self, tmp_path, run_dir):
        image = tmp_path / "small.mstn"
        save_tensor(image, make_blob_volume((16, 16), (0.0, 0.0), 0.4))
        argv = ["detect", "--checkpoint", str(run_dir / "checkpoint"), "--image", str(image)]
        assert main(argv + ["--out", str(tmp_path)]) == 1


class TestRegister:
    """Test pairwise registration."""

    def test_same_image_twice(self, tmp_path, run_dir, phantom_dir):
        image = str(phantom_dir / "images" / "0001.mstn")
        argv = ["register", "--checkpoint", str(run_dir / "checkpoint")]
        argv += ["--source", image, "--target", image, "--out", str(tmp_path)]
        assert main(argv) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["relative_l2"] == 0.0
        assert report["mse"] == 0.0
        assert report["total"] == pytest.approx(1e-4 * report["condition_frobenius"])
        assert load_tensor(tmp_path / "registered.mstn").dims == (32, 32)

    def test_missing_source(self, tmp_path, run_dir, phantom_dir):
        argv = ["register", "--checkpoint", str(run_dir / "checkpoint")]
        argv += ["--source", str(tmp_path / "none.mstn")]
        argv += ["--target", str(phantom_dir / "images" / "0000.mstn"), "--out", str(tmp_path)]
        assert main(argv) == 1


class TestCull:
    """Test landmark culling."""

    def test_keep_everything(self, tmp_path, run_dir, phantom_dir):
        argv = ["cull", "--checkpoint", str(run_dir / "checkpoint"), "--data", str(phantom_dir)]
        assert main(argv + ["--threshold=-inf", "--out", str(tmp_path)]) == 0
        report = pd.read_csv(tmp_path / "redundancy.csv")
        assert list(report["landmark_index"]) == list(range(6))
        assert report["kept"].all()
        summary = json.loads((tmp_path / "cull.json").read_text())
        assert summary["pairs_used"] > 0

    def test_deterministic(self, tmp_path, run_dir, phantom_dir):
        argv = ["cull", "--checkpoint", str(run_dir / "checkpoint"), "--data", str(phantom_dir)]
        assert main(argv + ["--threshold=-inf", "--out", str(tmp_path / "a")]) == 0
        assert main(argv + ["--threshold=-inf", "--out", str(tmp_path / "b")]) == 0
        first = (tmp_path / "a" / "redundancy.csv").read_bytes()
        assert (tmp_path / "b" / "redundancy.csv").read_bytes() == first

    def test_threshold_above_everything(self, tmp_path, run_dir, phantom_dir):
        argv = ["cull", "--checkpoint", str(run_dir / "checkpoint"), "--data", str(phantom_dir)]
        assert main(argv + ["--threshold", "1e300", "--out", str(tmp_path)]) == 1

    def test_pinned_survives(self, tmp_path, run_dir, phantom_dir):
        argv = ["cull", "--checkpoint", str(run_dir / "checkpoint"), "--data", str(phantom_dir)]
        assert main(argv + ["--threshold", "1e300", "--pin", "2", "--out", str(tmp_path)]) == 0
        report = pd.read_csv(tmp_path / "redundancy.csv")
        assert list(report["kept"]) == [False, False, True, False, False, False]

    def test_detect_with_kept(self, tmp_path, run_dir, phantom_dir):
        argv = ["cull", "--checkpoint", str(run_dir / "checkpoint"), "--data", str(phantom_dir)]
        assert main(argv + ["--threshold", "1e300", "--pin", "1", "4", "--out", str(tmp_path)]) == 0
        argv = ["detect", "--checkpoint", str(run_dir / "checkpoint"), "--data", str(phantom_dir)]
        argv += ["--kept", str(tmp_path / "redundancy.csv"), "--out", str(tmp_path / "det")]
        assert main(argv) == 0
        assert load_landmarks(tmp_path / "det" / "0000.txt").K == 2


class TestStats:
    """Test the statistics subcommands."""

    def test_pca(self, tmp_path, shapes_csv):
        assert main(["stats", "pca", "--shapes", str(shapes_csv), "--out", str(tmp_path)]) == 0
        components = pd.read_csv(tmp_path / "pca.csv")
        assert components["explained_ratio"].sum() >= 0.95 - 1e-9
        embedding = pd.read_csv(tmp_path / "embedding.csv")
        assert list(embedding.columns) == ["id", "label", "pc1", "pc2"]
        assert len(embedding) == 16

    def test_zscore_separates_cohorts(self, tmp_path, shapes_csv):
        argv = ["stats", "zscore", "--shapes", str(shapes_csv), "--base-label", "0"]
        assert main(argv + ["--out", str(tmp_path)]) == 0
        scores = pd.read_csv(tmp_path / "zscores.csv")
        means = scores.groupby("label")["zscore"].mean()
        assert means[1] > means[0]

    def test_zscore_unknown_base(self, tmp_path, shapes_csv):
        argv = ["stats", "zscore", "--shapes", str(shapes_csv), "--base-label", "7"]
        assert main(argv + ["--out", str(tmp_path)]) == 1

    def test_cluster_and_assign(self, tmp_path, shapes_csv):
        argv = ["stats", "cluster", "--shapes", str(shapes_csv), "--k", "2"]
        argv += ["--assign", str(shapes_csv), "--out", str(tmp_path)]
        assert main(argv) == 0
        clusters = pd.read_csv(tmp_path / "clusters.csv")
        assert set(clusters["cluster"]) == {0, 1}
        assigned = pd.read_csv(tmp_path / "assignments.csv")
        assert list(assigned["cluster"]) == list(clusters["cluster"])

    def test_method_required(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["stats"])
        assert excinfo.value.code == 2


class TestOverlay:
    """Test landmark overlays."""

    @pytest.fixture
    def landmarks_2d(self, tmp_path):
        path = tmp_path / "points.txt"
        save_landmarks(path, LandmarkSet(np.array([[-0.5, -0.5], [0.0, 0.25], [0.5, 0.5]])))
        return path

    def test_svg(self, tmp_path, phantom_dir, landmarks_2d):
        image = str(phantom_dir / "images" / "0000.mstn")
        argv = ["overlay", "--image", image, "--landmarks", str(landmarks_2d)]
        assert main(argv + ["--out", str(tmp_path / "a")]) == 0
        assert main(argv + ["--out", str(tmp_path / "b")]) == 0
        svg = (tmp_path / "a" / "0000_overlay.svg").read_bytes()
        assert b"<svg" in svg
        assert (tmp_path / "b" / "0000_overlay.svg").read_bytes() == svg

    def test_kept_mask(self, tmp_path, phantom_dir, landmarks_2d):
        report = tmp_path / "report.csv"
        pd.DataFrame(
            {"landmark_index": [0, 1, 2], "importance": [1.0, 0.0, 1.0], "kept": [1, 0, 1]}
        ).to_csv(report, index=False)
        image = str(phantom_dir / "images" / "0000.mstn")
        argv = ["overlay", "--image", image, "--landmarks", str(landmarks_2d)]
        assert main(argv + ["--kept", str(report), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "0000_overlay.svg").exists()

    def test_volume_slices(self, tmp_path):
        volume = tmp_path / "blob.mstn"
        save_tensor(volume, make_blob_volume((9, 12, 12), (0.0, 0.0, 0.0), 0.5))
        points = tmp_path / "points.txt"
        save_landmarks(points, LandmarkSet(np.array([[0.0, 0.1, 0.2], [1.0, 0.0, 0.0]])))
        argv = ["overlay", "--image", str(volume), "--landmarks", str(points)]
        assert main(argv + ["--out", str(tmp_path / "all")]) == 0
        written = sorted(p.name for p in (tmp_path / "all").iterdir())
        assert written == ["blob_slice_004.pgm", "blob_slice_008.pgm"]
        assert main(argv + ["--slice", "2", "--out", str(tmp_path / "one")]) == 0
        pgm = (tmp_path / "one" / "blob_slice_002.pgm").read_bytes()
        assert pgm.startswith(b"P5\n12 12\n255\n")

    def test_dimension_mismatch(self, tmp_path, phantom_dir):
        points = tmp_path / "points.txt"
        save_landmarks(points, LandmarkSet(np.zeros((2, 3))))
        image = str(phantom_dir / "images" / "0000.mstn")
        argv = ["overlay", "--image", image, "--landmarks", str(points), "--out", str(tmp_path)]
        assert main(argv) == 1


class TestPresets:
    """Test the shipped protocol configs."""

    def test_training_presets(self):
        phantom = load_config(CONFIGS / "phantom.json")
        assert (phantom.landmarks, phantom.lambda_, phantom.epochs) == (30, 1e-4, 20)
        assert phantom.anchor_points(2).shape == (4, 2)
        assert (phantom.downsample, phantom.pair_strategy) == (1, "all")
        assert phantom.build_arch((32, 32)).layers[-2].out == 52
        diatom = load_config(CONFIGS / "diatom.json")
        assert (diatom.landmarks, diatom.lambda_, diatom.epochs) == (26, 1e-5, 20)
        cranial = load_config(CONFIGS / "cranial.json")
        assert (cranial.landmarks, cranial.lambda_, cranial.epochs) == (80, 1e-5, 10)
        assert cranial.downsample == 1
        assert cranial.build_arch((16, 16, 16)).learned_landmarks == 80

    def test_synth_preset(self):
        config = load_synth_config(CONFIGS / "phantom-synth.json")
        assert (config.kind, config.count, config.dims) == ("phantom", 100, (64, 64))
