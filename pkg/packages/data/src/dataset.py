"""
Synthetic warped datasets

Each sample is a base image pulled through a random TPS warp. The warp is
defined by control points: every control point is displaced by i.i.d.
N(0, σ²) noise per coordinate and the image corners stay fixed, so

    sample(x) = base(T(x)),   T(perturbed control) = control,  T(corner) = corner

The perturbed control points are where the base's control features appear in
the sample; they are saved as the ground-truth landmarks of that sample.

Dataset directory:

    manifest.json
    images/NNNN.mstn        binary tensors
    landmarks/NNNN.txt      ground-truth landmarks (may be absent)
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from packages.data.src.phantom import control_points as phantom_control_points
from packages.network.src.landmark_net import corner_anchors
from packages.registration.src.landmarks import LandmarkSet, load_landmarks, save_landmarks
from packages.registration.src.tps import assemble, solve
from packages.registration.src.tps import warp as warp_image
from packages.tensor.src.image import ImageTensor
from packages.tensor.src.io import load_tensor, save_tensor
from packages.tensor.src.parallel import ordered_map
from packages.tensor.src.rng import make_rng

logger = logging.getLogger(__name__)

WARP_STREAM = 19
MANIFEST_FILE = "manifest.json"


class WarpSpec(BaseModel):
    """Random control-point warp.

    Attributes:
        control_points: Control points in normalized array-ordered coordinates
            (default: the 6 phantom control points)
        displacement_sigma: σ of the per-coordinate displacement
        seed: Master seed; sample i draws from stream (seed, WARP_STREAM, i)
    """

    control_points: list[list[float]] = Field(
        default_factory=lambda: phantom_control_points().tolist()
    )
    displacement_sigma: float = Field(default=0.05, ge=0)
    seed: int = 0

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def _check_points(self) -> "WarpSpec":
        points = np.array(self.control_points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] not in (2, 3) or len(points) == 0:
            raise ValueError(f"control points must be K × 2 or K × 3, got {points.shape}")
        if np.any(np.abs(points) > 1.0):
            raise ValueError("control points must lie inside [-1, 1]")
        return self

    def points(self) -> np.ndarray:
        return np.array(self.control_points, dtype=np.float64)

    def displacements(self, index: int, seed: int | None = None) -> np.ndarray:
        """The displacement of every control point for sample ``index``."""
        rng = make_rng(self.seed if seed is None else seed, WARP_STREAM, index)
        return rng.normal(0.0, self.displacement_sigma, size=self.points().shape)


@dataclass(frozen=True)
class WarpedSample:
    """One generated image with its ground truth.

    Attributes:
        image: Warped base image
        landmarks: Perturbed control points (where base controls land in this image)
        displacement: landmarks − control points
    """

    image: ImageTensor
    landmarks: np.ndarray
    displacement: np.ndarray


def warp_sample(
    base: ImageTensor, controls: np.ndarray, displacement: np.ndarray
) -> WarpedSample:
    """Warp ``base`` so that each control point moves by its displacement."""
    corners = corner_anchors(base.ndim)
    perturbed = controls + displacement
    l_S = LandmarkSet(np.vstack([controls, corners]))
    l_T = LandmarkSet(np.vstack([perturbed, corners]))
    registered = warp_image(solve(assemble(l_T, l_S)), base, base.dims)
    return WarpedSample(image=registered, landmarks=perturbed, displacement=displacement)


def make_dataset(
    base: ImageTensor, warp: WarpSpec, count: int, seed: int | None = None
) -> list[WarpedSample]:
    """``count`` independently warped copies of ``base``; deterministic per seed."""
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    controls = warp.points()
    if controls.shape[1] != base.ndim:
        raise ValueError(f"{controls.shape[1]}D control points for a {base.ndim}D image")
    logger.info("Generating %d warped samples (σ = %g)", count, warp.displacement_sigma)
    return ordered_map(
        lambda i: warp_sample(base, controls, warp.displacements(i, seed)), range(count)
    )


class SampleEntry(BaseModel):
    image: str
    landmarks: str | None = None
    label: str | None = None


class DatasetManifest(BaseModel):
    """manifest.json: what generated the dataset and where each sample lives."""

    kind: Literal["phantom", "blobs", "images"]
    dims: tuple[int, ...]
    seed: int = 0
    parameters: dict[str, Any] = Field(default_factory=dict)
    samples: list[SampleEntry] = Field(default_factory=list)

    model_config = {"extra": "forbid"}


@dataclass
class Dataset:
    """Images with optional ground-truth landmarks and labels."""

    manifest: DatasetManifest
    images: list[ImageTensor]
    landmarks: list[np.ndarray | None]

    @property
    def labels(self) -> list[str | None]:
        return [entry.label for entry in self.manifest.samples]


def write_dataset(
    directory: str | Path,
    images: Sequence[ImageTensor],
    landmarks: Sequence[np.ndarray] | None = None,
    labels: Sequence[str] | None = None,
    kind: Literal["phantom", "blobs", "images"] = "images",
    seed: int = 0,
    parameters: dict[str, Any] | None = None,
) -> DatasetManifest:
    """Write images (and landmarks / labels when given) plus the manifest."""
    if not images:
        raise ValueError("dataset needs at least one image")
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    if landmarks is not None:
        (directory / "landmarks").mkdir(exist_ok=True)
    entries = []
    for i, img in enumerate(images):
        image_path = f"images/{i:04d}.mstn"
        save_tensor(directory / image_path, img)
        landmark_path = None
        if landmarks is not None:
            landmark_path = f"landmarks/{i:04d}.txt"
            save_landmarks(directory / landmark_path, LandmarkSet(landmarks[i]))
        label = labels[i] if labels is not None else None
        entries.append(SampleEntry(image=image_path, landmarks=landmark_path, label=label))
    manifest = DatasetManifest(
        kind=kind, dims=images[0].dims, seed=seed, parameters=parameters or {}, samples=entries
    )
    (directory / MANIFEST_FILE).write_text(manifest.model_dump_json(indent=2))
    logger.info("Wrote %d samples to %s", len(images), directory)
    return manifest


def load_dataset(directory: str | Path) -> Dataset:
    """Read a dataset directory written by write_dataset."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_FILE
    if not manifest_path.exists():
        raise FileNotFoundError(f"{directory}: no {MANIFEST_FILE}")
    manifest = DatasetManifest.model_validate(json.loads(manifest_path.read_text()))
    images = ordered_map(lambda entry: load_tensor(directory / entry.image), manifest.samples)
    for entry, img in zip(manifest.samples, images):
        if img.dims != manifest.dims:
            raise ValueError(f"{entry.image}: dims {img.dims}, manifest says {manifest.dims}")
    landmarks = [
        load_landmarks(directory / entry.landmarks).points if entry.landmarks else None
        for entry in manifest.samples
    ]
    return Dataset(manifest=manifest, images=images, landmarks=landmarks)


def write_warped_dataset(
    directory: str | Path,
    samples: Sequence[WarpedSample],
    warp: WarpSpec,
    kind: Literal["phantom", "blobs", "images"] = "phantom",
) -> DatasetManifest:
    """Write generated samples with their ground-truth control points."""
    return write_dataset(
        directory,
        [s.image for s in samples],
        landmarks=[s.landmarks for s in samples],
        kind=kind,
        seed=warp.seed,
        parameters=warp.model_dump(),
    )
