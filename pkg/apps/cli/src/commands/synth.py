"""synth: write a synthetic dataset directory."""

import argparse
import logging

from apps.cli.src.common import output_dir
from apps.cli.src.schemas.synth import SynthConfig, load_synth_config
from packages.data.src.blobs import make_class_set
from packages.data.src.dataset import WarpSpec, make_dataset, write_dataset, write_warped_dataset
from packages.data.src.phantom import rasterize_phantom

logger = logging.getLogger(__name__)


def add_parser(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "synth",
        help="Generate a synthetic dataset",
        description="Generate TPS-perturbed phantoms or labelled blob classes.",
    )
    parser.add_argument("--config", help="JSON file with synth settings")
    parser.add_argument("--kind", choices=["phantom", "blobs"], help="Dataset kind")
    parser.add_argument("--count", type=int, help="Samples (per class for blobs)")
    parser.add_argument("--size", type=int, help="Grid size along every axis")
    parser.add_argument("--ndim", type=int, choices=[2, 3], help="Grid dimension (blobs)")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--sigma", type=float, help="Control-point displacement sigma (phantom)")
    parser.add_argument(
        "--table", choices=["original", "modified"], help="Ellipse intensity table (phantom)"
    )
    parser.add_argument("--out", required=True, help="Dataset directory (created if missing)")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> None:
    base_config = load_synth_config(args.config) if args.config else SynthConfig()
    config = base_config.with_overrides(
        kind=args.kind,
        count=args.count,
        size=args.size,
        ndim=args.ndim,
        seed=args.seed,
        sigma=args.sigma,
        table=args.table,
    )
    directory = output_dir(args.out)

    if config.kind == "phantom":
        warp = WarpSpec(displacement_sigma=config.sigma, seed=config.seed)
        base = rasterize_phantom(config.dims, table=config.table)
        samples = make_dataset(base, warp, config.count)
        write_warped_dataset(directory, samples, warp)
    else:
        classes = make_class_set(
            config.dims,
            config.squash,
            per_class=config.count,
            seed=config.seed,
            landmark_count=config.landmarks,
        )
        write_dataset(
            directory,
            classes.images,
            landmarks=list(classes.landmarks),
            labels=[str(label) for label in classes.labels],
            kind="blobs",
            seed=config.seed,
            parameters=config.model_dump(),
        )
    logger.info("synth: %s dataset written to %s", config.kind, directory)
