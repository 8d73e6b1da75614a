"""
Pairwise self-supervised training

Runs ``epochs`` passes over the pair sequence of the training split, one
pair per Adam step. Each step:

    1. add seeded Gaussian noise to the whitened source and target
       (noise stream keyed by seed, epoch, step, slot)
    2. detect landmarks on the noisy images with the shared parameters
    3. register the clean source onto the clean target and take
       MSE + λ·κ_F as the loss
    4. back-propagate and update

Steps whose TPS system is singular are skipped and counted; a non-finite
loss aborts the run. After every epoch the validation pairs are scored
without noise, a checkpoint is written and a row is appended to the
training log. Evaluation fans out over threads; steps never do.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from packages.network.src.checkpoint import save_checkpoint
from packages.network.src.landmark_net import NetParams, detect, detect_pair, init_params
from packages.registration.src.landmarks import LandmarkSet, save_landmarks
from packages.registration.src.tps import SingularSystemError, register_pair
from packages.tensor.src.image import ImageTensor, add_gaussian_noise, downsample2x, whiten
from packages.tensor.src.parallel import ordered_map
from packages.training.src.config import TrainConfig
from packages.training.src.loss import (
    LossTerms,
    NonFiniteLossError,
    loss_and_gradients,
    loss_forward,
)
from packages.training.src.optimizer import Adam
from packages.training.src.split import DatasetSplit, all_pairs, make_split, pair_iterator

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "mean_total", "mean_match", "mean_reg", "val_total", "skipped_steps"]
LOG_FILE = "training_log.csv"
SPLIT_FILE = "split.json"


@dataclass
class EpochStats:
    """Per-epoch means over the steps that ran."""

    epoch: int
    mean_total: float
    mean_match: float
    mean_reg: float
    val_total: float
    skipped_steps: int

    def to_dict(self) -> dict[str, Any]:
        return {column: getattr(self, column) for column in LOG_COLUMNS}


@dataclass
class TrainingResult:
    """Outcome of a training run.

    Attributes:
        params: Final detector parameters
        history: One EpochStats per epoch
        split: Image indices of each subset
        test_relative_l2: Mean relative L2 over test pairs (None if < 2 test images)
        train_landmarks: Final landmarks of every training image (n_train × K × d)
        checkpoints: Directories written, one per epoch
    """

    params: NetParams
    history: list[EpochStats]
    split: DatasetSplit[int]
    test_relative_l2: float | None
    train_landmarks: np.ndarray
    checkpoints: list[Path] = field(default_factory=list)

    def log_frame(self) -> pd.DataFrame:
        return pd.DataFrame([stats.to_dict() for stats in self.history], columns=LOG_COLUMNS)

    def to_dict(self) -> dict[str, Any]:
        return {
            "history": [stats.to_dict() for stats in self.history],
            "split": self.split.to_dict(),
            "test_relative_l2": self.test_relative_l2,
            "parameters": self.params.count(),
            "landmarks": self.params.K,
        }


def write_training_log(path: str | Path, history: Sequence[EpochStats]) -> None:
    frame = pd.DataFrame([stats.to_dict() for stats in history], columns=LOG_COLUMNS)
    frame.to_csv(path, index=False, float_format="%.17g")


def read_training_log(path: str | Path) -> pd.DataFrame:
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in LOG_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: training log lacks columns {missing}")
    return frame


def evaluate_pairs(
    params: NetParams,
    images: Sequence[ImageTensor],
    pairs: Sequence[tuple[int, int]],
    lambda_: float,
) -> tuple[float, int]:
    """Mean noise-free total loss over ``pairs``; singular pairs are excluded.

    Returns:
        (mean total, number of excluded pairs); the mean is NaN if every
        pair was excluded or ``pairs`` is empty
    """

    def score(pair: tuple[int, int]) -> LossTerms | None:
        try:
            return loss_forward(params, images[pair[0]], images[pair[1]], lambda_)
        except SingularSystemError:
            return None

    results = ordered_map(score, pairs)
    totals = [r.total for r in results if r is not None]
    excluded = len(results) - len(totals)
    return (float(np.mean(totals)) if totals else float("nan")), excluded


def relative_l2_pairs(
    params: NetParams, images: Sequence[ImageTensor], pairs: Sequence[tuple[int, int]]
) -> float:
    """Mean ‖I_R − I_T‖²/‖I_T‖² over pairs, registering with detected landmarks.

    Singular pairs and pairs with an infinite ratio (blank target) are left out.
    """

    def score(pair: tuple[int, int]) -> float | None:
        source, target = images[pair[0]], images[pair[1]]
        l_S, l_T = detect_pair(params, source, target)
        try:
            return register_pair(l_S, l_T, source, target).relative_l2
        except SingularSystemError:
            return None

    values = [v for v in ordered_map(score, pairs) if v is not None and np.isfinite(v)]
    return float(np.mean(values)) if values else float("nan")


def _reduce(img: ImageTensor, halvings: int) -> ImageTensor:
    for _ in range(halvings):
        img = downsample2x(img)
    return img


class Trainer:
    """Trains a landmark detector on a list of same-sized images.

    Args:
        config: Validated training configuration
        images: Raw images; they are downsampled and whitened once up front
        output_dir: Where checkpoints and the training log go (None: in memory only)
    """

    def __init__(
        self,
        config: TrainConfig,
        images: Sequence[ImageTensor],
        output_dir: str | Path | None = None,
    ):
        if len(images) < 2:
            raise ValueError(f"training needs at least 2 images, got {len(images)}")
        dims = images[0].dims
        if any(img.dims != dims for img in images):
            raise ValueError("all training images must share the same dims")
        self.config = config
        self.images = [whiten(_reduce(img, config.downsample)) for img in images]
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.arch = config.build_arch(self.images[0].dims)
        self.split = make_split(list(range(len(images))), config.split, config.seed)
        if len(self.split.train) < 2:
            raise ValueError(f"training split has {len(self.split.train)} image(s); need 2")

    def _noisy(self, img: ImageTensor, epoch: int, step: int, slot: int) -> ImageTensor:
        return add_gaussian_noise(img, self.config.noise_sigma, self.config.seed, epoch, step, slot)

    def _epoch(
        self, params: NetParams, optimizer: Adam, epoch: int
    ) -> tuple[NetParams, EpochStats]:
        cfg = self.config
        train = self.split.train
        pairs = pair_iterator(len(train), cfg.pair_strategy, cfg.seed, cfg.pair_count, epoch)
        totals, matches, regs = [], [], []
        skipped = 0
        for step, (a, b) in enumerate(pairs):
            source, target = self.images[train[a]], self.images[train[b]]
            net_inputs = (self._noisy(source, epoch, step, 0), self._noisy(target, epoch, step, 1))
            try:
                terms, grads = loss_and_gradients(params, source, target, cfg.lambda_, net_inputs)
            except SingularSystemError as e:
                skipped += 1
                logger.debug("epoch %d step %d: skipped singular system (%s)", epoch, step, e)
                continue
            if not terms.is_finite() or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch} step {step} "
                    f"(images {train[a]} → {train[b]}): {terms.to_dict()}"
                )
            params = params.replace_weights(optimizer.update(params.weights, grads))
            totals.append(terms.total)
            matches.append(terms.match)
            regs.append(terms.reg)
            logger.debug("epoch %d step %d: %s", epoch, step, terms.to_dict())

        if skipped:
            logger.warning(
                "epoch %d: skipped %d of %d steps (singular TPS system)", epoch, skipped, len(pairs)
            )
        val_total = float("nan")
        if len(self.split.val) >= 2:
            val_images = [self.images[k] for k in self.split.val]
            val_pairs = all_pairs(len(val_images))
            val_total, _ = evaluate_pairs(params, val_images, val_pairs, cfg.lambda_)
        stats = EpochStats(
            epoch=epoch,
            mean_total=float(np.mean(totals)) if totals else float("nan"),
            mean_match=float(np.mean(matches)) if matches else float("nan"),
            mean_reg=float(np.mean(regs)) if regs else float("nan"),
            val_total=val_total,
            skipped_steps=skipped,
        )
        return params, stats

    def _write_outputs(
        self, directory: Path, params: NetParams, train_landmarks: np.ndarray
    ) -> None:
        """Final checkpoint, the split and epoch-final landmarks of each training image."""
        save_checkpoint(directory / "checkpoint", params)
        (directory / SPLIT_FILE).write_text(json.dumps(self.split.to_dict(), indent=2))
        landmark_dir = directory / "landmarks"
        landmark_dir.mkdir(parents=True, exist_ok=True)
        for index, points in zip(self.split.train, train_landmarks):
            save_landmarks(landmark_dir / f"{index:04d}.txt", LandmarkSet(points))

    def train(self) -> TrainingResult:
        """Run every epoch and score the test split at the end."""
        cfg = self.config
        params = init_params(self.arch, cfg.seed, cfg.anchor_points(self.arch.d))
        optimizer = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
        logger.info(
            "Training %d parameters, K=%d, on %d/%d/%d images",
            params.count(),
            params.K,
            len(self.split.train),
            len(self.split.val),
            len(self.split.test),
        )

        history: list[EpochStats] = []
        checkpoints: list[Path] = []
        for epoch in range(1, cfg.epochs + 1):
            params, stats = self._epoch(params, optimizer, epoch)
            history.append(stats)
            logger.info(
                "epoch %d: total %.6g match %.6g reg %.6g val %.6g",
                epoch,
                stats.mean_total,
                stats.mean_match,
                stats.mean_reg,
                stats.val_total,
            )
            if self.output_dir is not None:
                checkpoints.append(
                    save_checkpoint(self.output_dir / "checkpoints" / f"epoch_{epoch:03d}", params)
                )
                write_training_log(self.output_dir / LOG_FILE, history)

        test_relative_l2 = None
        if len(self.split.test) >= 2:
            test_images = [self.images[k] for k in self.split.test]
            test_relative_l2 = relative_l2_pairs(params, test_images, all_pairs(len(test_images)))
            logger.info("test relative L2: %.4g%%", 100.0 * test_relative_l2)

        train_landmarks = np.stack(
            ordered_map(lambda k: detect(params, self.images[k]).points, self.split.train)
        )
        if self.output_dir is not None:
            self._write_outputs(self.output_dir, params, train_landmarks)
        return TrainingResult(
            params=params,
            history=history,
            split=self.split,
            test_relative_l2=test_relative_l2,
            train_landmarks=train_landmarks,
            checkpoints=checkpoints,
        )


def train(
    config: TrainConfig, images: Sequence[ImageTensor], output_dir: str | Path | None = None
) -> TrainingResult:
    """Train a detector; see Trainer."""
    return Trainer(config, images, output_dir).train()
