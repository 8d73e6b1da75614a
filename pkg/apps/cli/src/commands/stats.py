"""stats: PCA, Mahalanobis Z-scores and spectral clustering on a shape CSV."""

import argparse
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from apps.cli.src.common import output_dir
from packages.analysis.src.clustering import assign_clusters, spectral_cluster
from packages.analysis.src.pca import embed_2d, fit_pca
from packages.analysis.src.shape import ShapeMatrix, read_shape_matrix
from packages.analysis.src.zscore import cohort_zscores

logger = logging.getLogger(__name__)


def _frame(shape: ShapeMatrix, **columns: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame({"id": shape.ids, "label": shape.labels, **columns})


def _write(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format="%.17g")


def add_parser(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "stats",
        help="Shape statistics on a shapes.csv",
        description="Shape statistics on the id,label,x0,y0,... CSV written by detect.",
    )
    methods = parser.add_subparsers(dest="method", required=True, metavar="{pca,zscore,cluster}")

    pca = methods.add_parser(
        "pca",
        help="Principal components and 2D embedding",
        description="Writes pca.csv (retained components) and embedding.csv (first two scores).",
    )
    pca.add_argument("--shapes", required=True, help="Shape CSV")
    pca.add_argument(
        "--variance", type=float, default=0.95, help="Variance fraction to retain (default 0.95)"
    )
    pca.add_argument("--out", required=True, help="Output directory (created if missing)")
    pca.set_defaults(func=run_pca)

    zscore = methods.add_parser(
        "zscore",
        help="Mahalanobis Z-scores against a base cohort",
        description="Fits on the rows with --base-label and scores every row into zscores.csv.",
    )
    zscore.add_argument("--shapes", required=True, help="Shape CSV")
    zscore.add_argument("--base-label", required=True, help="Label of the base cohort rows")
    zscore.add_argument(
        "--variance", type=float, default=0.95, help="Variance fraction to retain (default 0.95)"
    )
    zscore.add_argument("--out", required=True, help="Output directory (created if missing)")
    zscore.set_defaults(func=run_zscore)

    cluster = methods.add_parser(
        "cluster",
        help="Spectral clustering",
        description=(
            "Writes clusters.csv with one cluster per row, and assignments.csv for the rows "
            "of --assign (nearest training row)."
        ),
    )
    cluster.add_argument("--shapes", required=True, help="Shape CSV to cluster")
    cluster.add_argument("--k", type=int, required=True, help="Number of clusters")
    cluster.add_argument("--seed", type=int, default=0, help="Seed for the k-means start")
    cluster.add_argument("--assign", help="Held-out shape CSV to assign to the clusters")
    cluster.add_argument("--out", required=True, help="Output directory (created if missing)")
    cluster.set_defaults(func=run_cluster)


def run_pca(args: argparse.Namespace) -> None:
    shape = read_shape_matrix(args.shapes)
    model = fit_pca(shape, args.variance)
    directory = output_dir(args.out)
    components = pd.DataFrame(
        {
            "component": np.arange(model.m),
            "variance": model.variances,
            "explained_ratio": model.explained_ratio,
        }
    )
    _write(components, directory / "pca.csv")
    embedding = embed_2d(shape)
    _write(_frame(shape, pc1=embedding[:, 0], pc2=embedding[:, 1]), directory / "embedding.csv")
    logger.info("stats pca: %d components retain %.4g of the variance", model.m, args.variance)


def run_zscore(args: argparse.Namespace) -> None:
    shape = read_shape_matrix(args.shapes)
    scores = cohort_zscores(shape, args.base_label, args.variance)
    _write(scores, output_dir(args.out) / "zscores.csv")
    logger.info("stats zscore: scored %d rows against %r", shape.n, args.base_label)


def run_cluster(args: argparse.Namespace) -> None:
    shape = read_shape_matrix(args.shapes)
    model = spectral_cluster(shape, args.k, seed=args.seed)
    directory = output_dir(args.out)
    _write(_frame(shape, cluster=model.labels), directory / "clusters.csv")
    if args.assign:
        held_out = read_shape_matrix(args.assign)
        _write(
            _frame(held_out, cluster=assign_clusters(model, held_out)),
            directory / "assignments.csv",
        )
    logger.info("stats cluster: %d rows into %d clusters", shape.n, args.k)
