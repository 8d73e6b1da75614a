"""detect: run a trained detector over images."""

import argparse
import logging
from pathlib import Path

import numpy as np

from apps.cli.src.common import UsageError, load_image, output_dir
from packages.analysis.src.shape import shape_matrix_from_landmarks, write_shape_matrix
from packages.culling.src.redundancy import apply_cull, read_report
from packages.data.src.dataset import load_dataset
from packages.network.src.checkpoint import load_checkpoint
from packages.network.src.landmark_net import detect, prepare_input
from packages.registration.src.landmarks import LandmarkSet, save_landmarks
from packages.tensor.src.image import ImageTensor
from packages.tensor.src.parallel import ordered_map

logger = logging.getLogger(__name__)

SHAPES_FILE = "shapes.csv"


def add_parser(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "detect",
        help="Detect landmarks with a trained checkpoint",
        description=(
            "Write one landmark file per image plus a shapes.csv with one row per image. "
            "Images are halved down to the detector input dims and whitened, as in training."
        ),
    )
    parser.add_argument("--checkpoint", required=True, help="Checkpoint directory")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--image", nargs="+", help="Image files (.mstn tensor or .pgm)")
    source.add_argument("--data", help="Dataset directory; its labels go into shapes.csv")
    parser.add_argument("--kept", help="Redundancy report CSV; only kept landmarks are written")
    parser.add_argument("--out", required=True, help="Output directory (created if missing)")
    parser.set_defaults(func=run)


def _inputs(args: argparse.Namespace) -> tuple[list[ImageTensor], list[str], list[str]]:
    if args.data:
        dataset = load_dataset(args.data)
        ids = [Path(entry.image).stem for entry in dataset.manifest.samples]
        labels = [label or "" for label in dataset.labels]
        return dataset.images, ids, labels
    ids = [Path(path).stem for path in args.image]
    if len(set(ids)) != len(ids):
        raise UsageError("image file names must be unique (outputs are named after them)")
    return [load_image(path) for path in args.image], ids, [""] * len(ids)


def run(args: argparse.Namespace) -> None:
    params = load_checkpoint(args.checkpoint)
    images, ids, labels = _inputs(args)
    landmarks = np.stack(
        ordered_map(lambda img: detect(params, prepare_input(params, img)).points, images)
    )
    kept = None
    if args.kept:
        report = read_report(args.kept)
        if report.K != params.K:
            raise ValueError(f"report covers {report.K} landmarks, detector outputs {params.K}")
        kept = report.kept_indices
        landmarks = apply_cull(landmarks, kept)

    directory = output_dir(args.out)
    for name, points in zip(ids, landmarks):
        save_landmarks(directory / f"{name}.txt", LandmarkSet(points))
    write_shape_matrix(
        directory / SHAPES_FILE, shape_matrix_from_landmarks(landmarks, ids=ids, labels=labels)
    )
    logger.info("detect: %d landmarks on %d images to %s", landmarks.shape[1], len(ids), directory)
