"""
Leave-one-out landmark redundancy

After training, every image pair is re-registered with one landmark left out
of the TPS solve at a time. The increase in the matching loss,

    Δ_{p,k} = MSE(I_T, I_R without landmark k) − MSE(I_T, I_R with all),

averaged over pairs, scores how much landmark k contributes. Landmarks whose
score falls below a threshold are dropped from the shape descriptors; the
detector itself is left unchanged.

Scoring only runs forward solves. Pairs are scored in parallel and reduced
in pair order, so the result does not depend on the worker count.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from packages.network.src.landmark_net import NetParams, detect, prepare_input
from packages.registration.src.landmarks import LandmarkSet
from packages.registration.src.tps import SingularSystemError, register_pair
from packages.tensor.src.image import ImageTensor, whiten
from packages.tensor.src.parallel import ordered_map
from packages.tensor.src.rng import make_rng
from packages.training.src.split import all_pairs

logger = logging.getLogger(__name__)

MAX_PAIRS = 2000
DEFAULT_THRESHOLD_FRACTION = 0.05
CULL_STREAM = 13
REPORT_COLUMNS = ["landmark_index", "importance", "kept"]


class EmptySelectionError(ValueError):
    """A threshold would remove every landmark."""


@dataclass
class RedundancyReport:
    """Per-landmark importance scores.

    Attributes:
        importance: Mean matching-loss increase when landmark k is left out (length K)
        pairs_used: Pairs whose full solve succeeded
        excluded: (pair, landmark) samples dropped because the reduced system was singular
        kept_mask: Landmarks retained by the last threshold (all True before culling)
    """

    importance: np.ndarray
    pairs_used: int
    excluded: int
    kept_mask: np.ndarray

    @property
    def K(self) -> int:
        return len(self.importance)

    @property
    def kept_indices(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.kept_mask)]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "landmark_index": np.arange(self.K),
                "importance": self.importance,
                "kept": self.kept_mask.astype(bool),
            },
            columns=REPORT_COLUMNS,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "importance": self.importance.tolist(),
            "pairs_used": self.pairs_used,
            "excluded": self.excluded,
            "kept": self.kept_indices,
        }


def scoring_pairs(n: int, seed: int = 0, max_pairs: int = MAX_PAIRS) -> list[tuple[int, int]]:
    """Every ordered pair of n images, or a seeded sample of ``max_pairs`` of them."""
    pairs = all_pairs(n)
    if len(pairs) <= max_pairs:
        return pairs
    chosen = np.sort(make_rng(seed, CULL_STREAM).choice(len(pairs), size=max_pairs, replace=False))
    return [pairs[k] for k in chosen]


def _pair_deltas(
    landmarks: Sequence[np.ndarray],
    images: Sequence[ImageTensor],
    pair: tuple[int, int],
) -> np.ndarray | None:
    """Δ for every landmark of one pair; NaN where the reduced system is singular."""
    source, target = pair
    l_S, l_T = landmarks[source], landmarks[target]
    try:
        full = register_pair(LandmarkSet(l_S), LandmarkSet(l_T), images[source], images[target]).mse
    except SingularSystemError:
        return None
    K = len(l_S)
    deltas = np.full(K, np.nan)
    for k in range(K):
        rows = np.delete(np.arange(K), k)
        try:
            reduced = register_pair(
                LandmarkSet(l_S[rows]), LandmarkSet(l_T[rows]), images[source], images[target]
            ).mse
        except SingularSystemError:
            continue
        deltas[k] = reduced - full
    return deltas


def score_landmarks(
    params: NetParams,
    images: Sequence[ImageTensor],
    pairs: Sequence[tuple[int, int]] | None = None,
    seed: int = 0,
    max_pairs: int = MAX_PAIRS,
) -> RedundancyReport:
    """Leave-one-out importance of every landmark the detector outputs.

    Args:
        params: Trained detector (left untouched)
        images: Raw images; whitened here as in training (and halved for detection)
        pairs: Explicit (source, target) index pairs; default ``scoring_pairs``
        seed: Seed for subsampling when there are more than ``max_pairs`` pairs
        max_pairs: Cap on the default pair set

    Returns:
        RedundancyReport with every landmark kept

    Raises:
        ValueError: fewer than 2 images, K < d + 2, or no pair could be solved
    """
    if len(images) < 2:
        raise ValueError(f"scoring needs at least 2 images, got {len(images)}")
    whitened = [whiten(img) for img in images]
    pairs = list(pairs) if pairs is not None else scoring_pairs(len(images), seed, max_pairs)
    landmarks = ordered_map(lambda img: detect(params, prepare_input(params, img)).points, images)
    return score_landmark_sets(landmarks, whitened, pairs)


def score_landmark_sets(
    landmarks: Sequence[np.ndarray],
    images: Sequence[ImageTensor],
    pairs: Sequence[tuple[int, int]],
) -> RedundancyReport:
    """Leave-one-out importance for given per-image landmarks (K × d each).

    Images are used as given. Row k of every landmark array is the same landmark.
    """
    if len(landmarks) != len(images):
        raise ValueError(f"{len(landmarks)} landmark sets for {len(images)} images")
    K, d = np.shape(landmarks[0])
    if any(np.shape(points) != (K, d) for points in landmarks):
        raise ValueError("every image needs the same number of landmarks")
    if K < d + 2:
        raise ValueError(f"leave-one-out needs K ≥ d + 2 = {d + 2} landmarks, got {K}")
    logger.info("Scoring %d landmarks over %d pairs", K, len(pairs))

    rows = [
        deltas
        for deltas in ordered_map(lambda p: _pair_deltas(landmarks, images, p), pairs)
        if deltas is not None
    ]
    if not rows:
        raise ValueError("no pair produced a solvable TPS system")
    deltas = np.vstack(rows)
    excluded = int(np.isnan(deltas).sum())
    if excluded:
        logger.warning("excluded %d singular (pair, landmark) samples", excluded)
    counts = np.sum(~np.isnan(deltas), axis=0)
    sums = np.nansum(deltas, axis=0)
    importance = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return RedundancyReport(
        importance=importance,
        pairs_used=len(rows),
        excluded=excluded,
        kept_mask=np.ones(K, dtype=bool),
    )


def default_threshold(report: RedundancyReport) -> float:
    """5% of the largest importance score."""
    return DEFAULT_THRESHOLD_FRACTION * float(np.max(report.importance))


def cull(
    report: RedundancyReport, threshold: float, pinned: Sequence[int] = ()
) -> list[int]:
    """Keep landmarks with importance ≥ threshold, plus any pinned indices.

    Updates ``report.kept_mask`` and returns the sorted kept indices.

    Raises:
        ValueError: non-finite threshold (−∞ is allowed and keeps everything)
        EmptySelectionError: nothing would survive
    """
    if np.isnan(threshold) or threshold == np.inf:
        raise ValueError(f"threshold must be finite or -inf, got {threshold}")
    mask = report.importance >= threshold
    for k in pinned:
        if not 0 <= k < report.K:
            raise ValueError(f"pinned landmark {k} outside 0..{report.K - 1}")
        mask[k] = True
    if not mask.any():
        raise EmptySelectionError(
            f"threshold {threshold:.6g} removes all {report.K} landmarks "
            f"(max importance {np.max(report.importance):.6g})"
        )
    report.kept_mask = mask
    logger.info("Kept %d of %d landmarks at threshold %.6g", mask.sum(), report.K, threshold)
    return report.kept_indices


def apply_cull(landmarks: np.ndarray, kept: Sequence[int] | np.ndarray) -> np.ndarray:
    """Drop culled rows from one (K × d) or many (n × K × d) landmark arrays.

    ``kept`` is either an index list or a boolean mask of length K.
    """
    landmarks = np.asarray(landmarks, dtype=np.float64)
    kept = np.asarray(kept)
    if kept.dtype == bool:
        if len(kept) != landmarks.shape[-2]:
            raise ValueError(f"mask of length {len(kept)} for {landmarks.shape[-2]} landmarks")
        kept = np.flatnonzero(kept)
    return np.take(landmarks, kept.astype(np.intp), axis=-2)


def write_report(path: str | Path, report: RedundancyReport) -> None:
    report.to_frame().to_csv(path, index=False, float_format="%.17g")


def read_report(path: str | Path) -> RedundancyReport:
    """Read a report CSV; pair counts are not stored and come back as 0."""
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in REPORT_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: report lacks columns {missing}")
    frame = frame.sort_values("landmark_index")
    if list(frame["landmark_index"]) != list(range(len(frame))):
        raise ValueError(f"{path}: landmark_index must run 0..K-1")
    return RedundancyReport(
        importance=frame["importance"].to_numpy(dtype=np.float64),
        pairs_used=0,
        excluded=0,
        kept_mask=frame["kept"].astype(bool).to_numpy(),
    )
