"""
Ellipsoidal blob volumes

Smooth blobs with a tanh edge, used as small stand-ins for segmented
anatomy when testing detection and shape statistics. A blob has semi-axes
(radius·squash, radius, ..., radius): ``squash`` stretches axis 0 only.

    ρ(x) = ‖(x − center) / semi_axes‖
    I(x) = (1 − tanh((ρ − 1)/w)) / (1 − tanh(−1/w))

so I(center) = 1 and I → 0 well outside the surface. Class sets draw one
squash factor per class and jitter center and radius per sample.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from packages.tensor.src.image import ImageTensor, grid_coordinates
from packages.tensor.src.parallel import ordered_map
from packages.tensor.src.rng import make_rng

logger = logging.getLogger(__name__)

EDGE_WIDTH = 0.1
BLOB_STREAM = 23
TWO_CLASS_SQUASH = (1.0, 1.5)


def semi_axes(d: int, radius: float, squash: float) -> np.ndarray:
    axes = np.full(d, float(radius))
    axes[0] *= squash
    return axes


def make_blob_volume(
    dims: Sequence[int],
    center: Sequence[float],
    radius: float,
    squash: float = 1.0,
    edge_width: float = EDGE_WIDTH,
) -> ImageTensor:
    """Rasterize one blob on a 2D or 3D grid.

    Raises:
        ValueError: non-positive sizes, or the blob surface leaves [-1, 1]^d
    """
    dims = tuple(int(n) for n in dims)
    center = np.asarray(center, dtype=np.float64)
    if len(dims) not in (2, 3) or center.shape != (len(dims),):
        raise ValueError(f"center {center.shape} does not match dims {dims}")
    if radius <= 0 or squash <= 0 or edge_width <= 0:
        raise ValueError("radius, squash and edge width must be positive")
    axes = semi_axes(len(dims), radius, squash)
    if np.any(np.abs(center) + axes > 1.0):
        raise ValueError(f"blob with semi-axes {axes} at {center} leaves the volume")
    rho = np.linalg.norm((grid_coordinates(dims) - center) / axes, axis=1)
    peak = 1.0 - np.tanh(-1.0 / edge_width)
    return ImageTensor(dims=dims, data=(1.0 - np.tanh((rho - 1.0) / edge_width)) / peak)


def boundary_landmarks(
    center: Sequence[float], radius: float, squash: float, d: int, count: int = 8
) -> np.ndarray:
    """``count`` corresponding points on the blob surface.

    2D: evenly spaced angles. 3D: a Fibonacci lattice on the unit sphere.
    Both are scaled by the semi-axes, so row k matches row k on any blob.
    """
    if d == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        unit = np.column_stack([np.cos(angles), np.sin(angles)])
    elif d == 3:
        k = np.arange(count) + 0.5
        polar = np.arccos(1.0 - 2.0 * k / count)
        azimuth = np.pi * (1.0 + np.sqrt(5.0)) * k
        unit = np.column_stack(
            [np.cos(polar), np.sin(polar) * np.cos(azimuth), np.sin(polar) * np.sin(azimuth)]
        )
    else:
        raise ValueError(f"landmarks defined for d ∈ {{2, 3}}, got {d}")
    return np.asarray(center, dtype=np.float64) + unit * semi_axes(d, radius, squash)


@dataclass(frozen=True)
class ClassSet:
    """Blob images with class labels and surface landmarks."""

    images: list[ImageTensor]
    labels: list[int]
    landmarks: np.ndarray
    squash: tuple[float, ...]


def make_class_set(
    dims: Sequence[int],
    squash: Sequence[float],
    per_class: int,
    seed: int = 0,
    radius: float = 0.4,
    jitter: float = 0.05,
    landmark_count: int = 8,
) -> ClassSet:
    """``per_class`` blobs for each squash factor, in class-major order.

    Centers move by N(0, jitter²) per axis (clipped to ±2·jitter) and radii
    scale by 1 + N(0, jitter²) (clipped likewise).
    """
    if per_class < 1 or not squash:
        raise ValueError("need at least one class and one sample per class")
    d = len(tuple(dims))

    def sample(index: int) -> tuple[ImageTensor, np.ndarray]:
        label, _ = divmod(index, per_class)
        rng = make_rng(seed, BLOB_STREAM, index)
        center = np.clip(rng.normal(0.0, jitter, size=d), -2.0 * jitter, 2.0 * jitter)
        r = radius * (1.0 + float(np.clip(rng.normal(0.0, jitter), -2.0 * jitter, 2.0 * jitter)))
        image = make_blob_volume(dims, center, r, squash[label])
        return image, boundary_landmarks(center, r, squash[label], d, landmark_count)

    total = per_class * len(squash)
    logger.info("Generating %d blobs in %d classes", total, len(squash))
    results = ordered_map(sample, range(total))
    return ClassSet(
        images=[image for image, _ in results],
        labels=[index // per_class for index in range(total)],
        landmarks=np.stack([points for _, points in results]),
        squash=tuple(float(s) for s in squash),
    )


def make_two_class_set(
    dims: Sequence[int], per_class: int, seed: int = 0, **kwargs: float
) -> ClassSet:
    """Round blobs (class 0) against blobs stretched 1.5× along axis 0 (class 1)."""
    return make_class_set(dims, TWO_CLASS_SQUASH, per_class, seed, **kwargs)
