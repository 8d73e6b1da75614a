"""
Training configuration

One JSON document per run. Keys (JSON name → meaning):

    lambda          weight λ of the κ_F regularizer (≥ 0)
    epochs          passes over the pair sequence
    learning_rate   Adam step size
    noise_sigma     σ of Gaussian noise on whitened network inputs
    pair_strategy   "all" (every ordered pair) | "random" (pair_count draws)
    pair_count      pairs per epoch for the random strategy
    seed            master seed for split, init, pairs and noise
    split           [train, val, test] fractions summing to 1
    landmarks       total K, anchors included
    anchors         "corners" | "none" | explicit list of points
    arch            optional explicit layer list (default architecture otherwise)
    input_dims      optional detector input dims (dataset dims otherwise)
    downsample      2× halvings applied to every image before training
    beta1, beta2, eps   Adam moment decays and denominator floor

Unknown keys are rejected so a typo cannot silently fall back to a default.
"""

import json
from pathlib import Path
from typing import Any, Literal, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from packages.network.src.arch import ArchSpec, LayerSpec, default_arch
from packages.network.src.landmark_net import corner_anchors


class TrainConfig(BaseModel):
    """Hyperparameters and protocol choices for one training run."""

    lambda_: float = Field(
        default=1e-4, ge=0, alias="lambda", description="Regularization weight λ"
    )
    epochs: int = Field(default=20, ge=1)
    learning_rate: float = Field(default=1e-4, gt=0)
    noise_sigma: float = Field(default=0.05, ge=0)
    pair_strategy: Literal["all", "random"] = "all"
    pair_count: int | None = Field(default=None, ge=1)
    seed: int = 0
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    landmarks: int = Field(default=30, ge=3, description="Total K including anchors")
    anchors: Literal["corners", "none"] | list[list[float]] = "corners"
    arch: list[LayerSpec] | None = None
    input_dims: tuple[int, ...] | None = None
    downsample: int = Field(default=0, ge=0, le=4)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)

    model_config = {"frozen": True, "extra": "forbid", "populate_by_name": True}

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        if any(f < 0 for f in self.split) or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {self.split}")
        if self.pair_strategy == "random" and self.pair_count is None:
            raise ValueError("pair_strategy 'random' needs pair_count")
        return self

    def anchor_points(self, d: int) -> np.ndarray:
        """Resolve the anchors setting to an (A × d) array."""
        if self.anchors == "corners":
            return corner_anchors(d)
        if self.anchors == "none":
            return np.zeros((0, d))
        points = np.array(self.anchors, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != d:
            raise ValueError(f"anchors must be a list of {d}D points, got shape {points.shape}")
        return points

    def build_arch(self, dims: Sequence[int]) -> ArchSpec:
        """Detector layout for images of ``dims`` (or the configured input_dims)."""
        input_dims = tuple(self.input_dims or dims)
        d = len(input_dims)
        learned = self.landmarks - self.anchor_points(d).shape[0]
        if learned < 1:
            raise ValueError(
                f"{self.landmarks} landmarks leave no learned points after "
                f"{self.anchor_points(d).shape[0]} anchors"
            )
        if self.arch is None:
            return default_arch(input_dims, learned)
        arch = ArchSpec(input_dims=input_dims, layers=tuple(self.arch))
        if arch.learned_landmarks != learned:
            raise ValueError(
                f"arch outputs {arch.learned_landmarks} landmarks, config expects {learned}"
            )
        return arch

    def with_overrides(self, **overrides: Any) -> "TrainConfig":
        """Validated copy with non-None overrides applied (flags over file values)."""
        data = self.model_dump(by_alias=True)
        for key, value in overrides.items():
            if value is None:
                continue
            data["lambda" if key in ("lambda_", "lambda") else key] = value
        return TrainConfig.model_validate(data)

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2, exclude_none=True)


def load_config(path: str | Path) -> TrainConfig:
    """Read and validate a JSON config file."""
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return TrainConfig.model_validate(raw)
