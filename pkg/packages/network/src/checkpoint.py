"""
Detector checkpoints

A checkpoint is a directory:

    arch.txt       layer list (ArchSpec.to_text) followed by one
                   "anchor c0 c1 [c2]" line per fixed landmark
    manifest.txt   one line per tensor: "<name> <dim0> <dim1> ..."
    <name>.mstn    the tensor, flattened to one axis in the binary format

Values round-trip exactly (float64 payloads, 17 significant digits for
anchors).
"""

import logging
from pathlib import Path

import numpy as np

from packages.network.src.arch import ArchSpec
from packages.network.src.landmark_net import NetParams
from packages.tensor.src.io import read_array, write_array

logger = logging.getLogger(__name__)

ARCH_FILE = "arch.txt"
MANIFEST_FILE = "manifest.txt"


class CheckpointError(ValueError):
    """A checkpoint directory is incomplete or inconsistent."""


def save_checkpoint(directory: str | Path, params: NetParams) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    anchor_lines = "".join(
        "anchor " + " ".join(f"{v:.17g}" for v in row) + "\n" for row in params.anchors
    )
    (directory / ARCH_FILE).write_text(params.arch.to_text() + anchor_lines)
    manifest = []
    for name, value in params.weights.items():
        write_array(directory / f"{name}.mstn", value.reshape(-1))
        manifest.append(" ".join([name, *(str(n) for n in value.shape)]))
    (directory / MANIFEST_FILE).write_text("\n".join(manifest) + "\n")
    logger.debug("Saved checkpoint with %d tensors to %s", len(manifest), directory)
    return directory


def load_checkpoint(directory: str | Path) -> NetParams:
    """Rebuild NetParams from a checkpoint directory.

    Raises:
        CheckpointError: missing files, or a tensor whose size disagrees
            with its manifest entry or the architecture
    """
    directory = Path(directory)
    try:
        arch_text = (directory / ARCH_FILE).read_text()
        manifest_text = (directory / MANIFEST_FILE).read_text()
    except FileNotFoundError as e:
        raise CheckpointError(f"incomplete checkpoint {directory}: {e.filename} missing") from e

    arch = ArchSpec.from_text(arch_text)
    anchors = [
        [float(v) for v in line.split()[1:]]
        for line in arch_text.splitlines()
        if line.startswith("anchor")
    ]

    weights: dict[str, np.ndarray] = {}
    for line in manifest_text.splitlines():
        if not line.strip():
            continue
        name, *dims = line.split()
        shape = tuple(int(n) for n in dims)
        path = directory / f"{name}.mstn"
        if not path.exists():
            raise CheckpointError(f"tensor {name} listed in manifest but {path.name} is missing")
        flat = read_array(path)
        if flat.size != int(np.prod(shape)):
            raise CheckpointError(f"{name}: {flat.size} values for shape {shape}")
        weights[name] = flat.reshape(shape)

    try:
        return NetParams(
            arch=arch,
            weights=weights,
            anchors=np.array(anchors, dtype=np.float64).reshape(-1, arch.d),
        )
    except ValueError as e:
        raise CheckpointError(f"checkpoint {directory} does not match its architecture: {e}") from e
