"""overlay: draw landmarks over an image."""

import argparse
import logging
from pathlib import Path

import numpy as np

from apps.cli.src.common import load_image, output_dir
from apps.cli.src.render import nearest_slices, overlay_slice_pgm, overlay_svg
from packages.culling.src.redundancy import read_report
from packages.registration.src.landmarks import load_landmarks

logger = logging.getLogger(__name__)


def add_parser(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "overlay",
        help="Draw landmarks over an image",
        description=(
            "2D images: <stem>_overlay.svg with indexed circles. 3D volumes: "
            "<stem>_slice_NNN.pgm axial slices with a cross per landmark."
        ),
    )
    parser.add_argument("--image", required=True, help="Image (.mstn or .pgm)")
    parser.add_argument("--landmarks", required=True, help="Landmark text file")
    parser.add_argument("--kept", help="Redundancy report CSV; only kept landmarks are drawn")
    parser.add_argument(
        "--slice",
        type=int,
        help="Axial slice for 3D volumes (default: every slice holding a landmark)",
    )
    parser.add_argument("--out", required=True, help="Output directory (created if missing)")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> None:
    image = load_image(args.image)
    points = load_landmarks(args.landmarks).points
    if points.shape[1] != image.ndim:
        raise ValueError(f"{points.shape[1]}D landmarks for a {image.ndim}D image")
    indices = np.arange(len(points))
    if args.kept:
        report = read_report(args.kept)
        if report.K != len(points):
            raise ValueError(f"report covers {report.K} landmarks, file holds {len(points)}")
        indices = np.asarray(report.kept_indices, dtype=np.intp)
        points = points[indices]

    directory = output_dir(args.out)
    stem = Path(args.image).stem
    volume = image.as_array()
    if image.ndim == 2:
        overlay_svg(directory / f"{stem}_overlay.svg", volume, points, indices.tolist())
        logger.info("overlay: %d landmarks drawn", len(points))
        return
    if args.slice is not None:
        slices = [args.slice]
    else:
        slices = sorted({int(k) for k in nearest_slices(points, image.dims)})
    for index in slices:
        path = directory / f"{stem}_slice_{index:03d}.pgm"
        drawn = overlay_slice_pgm(path, volume, points, index)
        logger.info("overlay: slice %d with %d landmarks", index, drawn)
