"""train: fit a landmark detector on a dataset directory."""

import argparse
import logging

from apps.cli.src.common import output_dir, write_json
from packages.data.src.dataset import load_dataset
from packages.training.src.config import TrainConfig, load_config
from packages.training.src.trainer import train

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
RESULT_FILE = "result.json"


def add_parser(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "train",
        help="Train a landmark detector",
        description=(
            "Train on every image of a dataset directory. Flags override the config file, "
            "which overrides the defaults."
        ),
    )
    parser.add_argument("--data", required=True, help="Dataset directory written by synth")
    parser.add_argument("--config", help="JSON training config")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument(
        "--lambda", dest="lambda_", type=float, help="Condition-number regularization weight"
    )
    parser.add_argument("--epochs", type=int, help="Training epochs")
    parser.add_argument("--landmarks", type=int, help="Total landmarks K, anchors included")
    parser.add_argument("--anchors", choices=["corners", "none"], help="Fixed landmarks")
    parser.add_argument("--out", required=True, help="Run directory (created if missing)")
    parser.set_defaults(func=run)


def resolve_config(args: argparse.Namespace) -> TrainConfig:
    """Defaults, then the config file, then flags."""
    config = load_config(args.config) if args.config else TrainConfig()
    return config.with_overrides(
        seed=args.seed,
        lambda_=args.lambda_,
        epochs=args.epochs,
        landmarks=args.landmarks,
        anchors=args.anchors,
    )


def run(args: argparse.Namespace) -> None:
    config = resolve_config(args)
    dataset = load_dataset(args.data)
    directory = output_dir(args.out)
    (directory / CONFIG_FILE).write_text(config.to_json() + "\n")
    result = train(config, dataset.images, directory)
    write_json(directory / RESULT_FILE, result.to_dict())
    logger.info("train: run written to %s", directory)
