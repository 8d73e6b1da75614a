"""Tests for checkpoint directories."""

import numpy as np
import pytest

from packages.network.src.arch import default_arch
from packages.network.src.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from packages.network.src.landmark_net import corner_anchors, init_params


class TestCheckpoint:
    """Test save/load of detector parameters."""

    def test_round_trip_exact(self, tmp_path):
        params = init_params(default_arch((16, 16), 4), 7, corner_anchors(2) * 0.999)
        loaded = load_checkpoint(save_checkpoint(tmp_path / "ckpt", params))
        assert loaded.arch == params.arch
        assert np.array_equal(loaded.anchors, params.anchors)
        assert list(loaded.weights) == list(params.weights)
        assert all(np.array_equal(loaded.weights[n], params.weights[n]) for n in params.weights)

    def test_3d_kernels(self, tmp_path):
        """Five-axis conv kernels survive through the flattened payloads."""
        params = init_params(default_arch((8, 8, 8), 3), 1)
        loaded = load_checkpoint(save_checkpoint(tmp_path / "ckpt", params))
        assert loaded.weights["layer0.kernel"].shape == (4, 1, 3, 3, 3)
        assert loaded.anchors.shape == (0, 3)

    def test_manifest_lines(self, tmp_path):
        params = init_params(default_arch((16, 16), 4), 0)
        directory = save_checkpoint(tmp_path / "ckpt", params)
        first = (directory / "manifest.txt").read_text().splitlines()[0]
        assert first == "layer0.kernel 8 1 3 3"

    def test_missing_tensor(self, tmp_path):
        directory = save_checkpoint(tmp_path / "ckpt", init_params(default_arch((16, 16), 4), 0))
        (directory / "layer2.bias.mstn").unlink()
        with pytest.raises(CheckpointError):
            load_checkpoint(directory)

    def test_missing_arch(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "empty")

    def test_manifest_shape_disagrees(self, tmp_path):
        directory = save_checkpoint(tmp_path / "ckpt", init_params(default_arch((16, 16), 4), 0))
        manifest = directory / "manifest.txt"
        manifest.write_text(manifest.read_text().replace("layer0.bias 8", "layer0.bias 9"))
        with pytest.raises(CheckpointError):
            load_checkpoint(directory)
