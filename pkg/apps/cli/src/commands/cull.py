"""cull: score landmark importance and drop the redundant ones."""

import argparse
import logging

from apps.cli.src.common import output_dir, write_json
from packages.culling.src.redundancy import (
    MAX_PAIRS,
    cull,
    default_threshold,
    score_landmarks,
    write_report,
)
from packages.data.src.dataset import load_dataset
from packages.network.src.checkpoint import load_checkpoint

logger = logging.getLogger(__name__)

REPORT_FILE = "redundancy.csv"
SUMMARY_FILE = "cull.json"


def add_parser(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "cull",
        help="Leave-one-out landmark importance and thresholding",
        description=(
            "Score every landmark by the mean registration-loss increase when it is left "
            "out, then keep those at or above the threshold. Writes redundancy.csv and "
            "cull.json."
        ),
    )
    parser.add_argument("--checkpoint", required=True, help="Checkpoint directory")
    parser.add_argument("--data", required=True, help="Dataset directory to score on")
    parser.add_argument(
        "--threshold",
        type=float,
        help="Importance cut-off (default: 5%% of the largest importance)",
    )
    parser.add_argument(
        "--pin", type=int, nargs="*", default=[], help="Landmark indices kept regardless"
    )
    parser.add_argument("--seed", type=int, default=0, help="Seed for pair subsampling")
    parser.add_argument(
        "--max-pairs",
        type=int,
        default=MAX_PAIRS,
        help=f"Cap on scored image pairs (default {MAX_PAIRS})",
    )
    parser.add_argument("--out", required=True, help="Output directory (created if missing)")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> None:
    params = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    report = score_landmarks(params, dataset.images, seed=args.seed, max_pairs=args.max_pairs)
    threshold = default_threshold(report) if args.threshold is None else args.threshold
    kept = cull(report, threshold, pinned=args.pin)

    directory = output_dir(args.out)
    write_report(directory / REPORT_FILE, report)
    write_json(directory / SUMMARY_FILE, {**report.to_dict(), "threshold": threshold})
    logger.info("cull: kept %d of %d landmarks", len(kept), report.K)
