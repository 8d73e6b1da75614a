"""Pydantic schema for synthetic dataset generation."""

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, model_validator


class SynthConfig(BaseModel):
    """Parameters of one synthetic dataset.

    Attributes:
        kind: phantom (TPS-perturbed Shepp-Logan) or blobs (labelled blob classes)
        count: Samples to generate (per class for blobs)
        size: Grid size along every axis
        ndim: 2 or 3 (phantoms are 2D only)
        seed: Master seed
        sigma: Control-point displacement σ (phantom)
        table: Ellipse table (phantom)
        squash: One axis-0 stretch factor per class (blobs)
        landmarks: Surface landmarks per blob
    """

    kind: Literal["phantom", "blobs"] = "phantom"
    count: int = Field(default=100, ge=1)
    size: int = Field(default=64, ge=8)
    ndim: Literal[2, 3] = 2
    seed: int = 0
    sigma: float = Field(default=0.05, ge=0, description="Control-point displacement σ")
    table: Literal["original", "modified"] = "modified"
    squash: list[float] = Field(default_factory=lambda: [1.0, 1.5], min_length=1)
    landmarks: int = Field(default=8, ge=1)

    model_config = {"frozen": True, "extra": "forbid"}

    @model_validator(mode="after")
    def _check_kind(self) -> "SynthConfig":
        if self.kind == "phantom" and (self.ndim != 2 or self.size < 32):
            raise ValueError("phantoms are 2D with size ≥ 32")
        if any(s <= 0 for s in self.squash):
            raise ValueError(f"squash factors must be positive, got {self.squash}")
        return self

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.size,) * self.ndim

    def with_overrides(self, **overrides: Any) -> "SynthConfig":
        data = self.model_dump()
        data.update({key: value for key, value in overrides.items() if value is not None})
        return SynthConfig.model_validate(data)


def load_synth_config(path: str | Path) -> SynthConfig:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return SynthConfig.model_validate(raw)
