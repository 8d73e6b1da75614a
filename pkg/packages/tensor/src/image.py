"""
Image Tensors

Dense 2D/3D intensity grids shared by every stage of the landmark pipeline,
together with the grid coordinate convention and the intensity
preprocessing applied before images reach the detector.

Grid convention (corner aligned):
    pixel index i along an axis of size N maps to x = 2·i/(N−1) − 1,
    so index 0 ↔ −1.0 and index N−1 ↔ +1.0 exactly.

Point coordinates are ordered like the array axes: component a of a point
refers to axis a of ``dims`` (slowest varying first).
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from packages.tensor.src.rng import make_rng

NOISE_STREAM = 11


class DimensionMismatchError(ValueError):
    """Raised when an image and a coordinate set disagree on dimension."""


@dataclass(frozen=True)
class ImageTensor:
    """A d-dimensional intensity grid (d ∈ {2, 3}).

    Attributes:
        dims: Axis sizes ordered slowest-to-fastest varying
        data: Flat row-major float64 intensities, read-only
    """

    dims: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self) -> None:
        dims = tuple(int(n) for n in self.dims)
        if len(dims) not in (2, 3):
            raise DimensionMismatchError(f"image must be 2D or 3D, got dims {dims}")
        if any(n <= 0 for n in dims):
            raise ValueError(f"dims must be positive, got {dims}")
        data = np.array(self.data, dtype=np.float64).reshape(-1)
        if data.size != int(np.prod(dims)):
            raise ValueError(
                f"product(dims)={int(np.prod(dims))} does not match {data.size} values"
            )
        data.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "ImageTensor":
        """Wrap an n-d array (copied) as an image."""
        array = np.array(array, dtype=np.float64)
        return cls(dims=array.shape, data=array.reshape(-1))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def as_array(self) -> np.ndarray:
        """Read-only n-d view of the intensities."""
        return self.data.reshape(self.dims)


def index_to_coordinate(index: np.ndarray | float, size: int) -> np.ndarray:
    """Map pixel indices along an axis of ``size`` to normalized coordinates."""
    return 2.0 * np.asarray(index, dtype=np.float64) / (size - 1) - 1.0


def coordinate_to_index(coord: np.ndarray | float, size: int) -> np.ndarray:
    """Inverse of index_to_coordinate (continuous index space)."""
    return (np.asarray(coord, dtype=np.float64) + 1.0) * (size - 1) / 2.0


def grid_coordinates(dims: Sequence[int]) -> np.ndarray:
    """Normalized coordinates of every grid node, row-major, shape (prod(dims), d)."""
    axes = [index_to_coordinate(np.arange(n), n) if n > 1 else np.zeros(1) for n in dims]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def whiten(img: ImageTensor) -> ImageTensor:
    """Shift and scale intensities to zero mean and unit population std.

    Constant images (std indistinguishable from zero) map to all zeros.
    """
    if img.data.size < 2:
        raise ValueError("whitening needs at least 2 elements")
    mean = float(np.mean(img.data))
    std = float(np.std(img.data))
    if std <= 1e-12 * max(1.0, abs(mean)):
        return ImageTensor(dims=img.dims, data=np.zeros_like(img.data))
    return ImageTensor(dims=img.dims, data=(img.data - mean) / std)


def add_gaussian_noise(img: ImageTensor, sigma: float, seed: int, *stream: int) -> ImageTensor:
    """Add i.i.d. N(0, sigma²) noise, reproducible for a fixed (seed, stream)."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return ImageTensor(dims=img.dims, data=img.data.copy())
    rng = make_rng(seed, NOISE_STREAM, *stream)
    noise = rng.normal(0.0, sigma, size=img.data.size)
    return ImageTensor(dims=img.dims, data=img.data + noise)


def downsample2x(img: ImageTensor) -> ImageTensor:
    """Average 2^d blocks; a trailing odd row/column/slice is dropped."""
    array = img.as_array()
    trimmed = array[tuple(slice(0, (n // 2) * 2) for n in img.dims)]
    shape: list[int] = []
    for n in trimmed.shape:
        shape.extend([n // 2, 2])
    blocks = trimmed.reshape(shape)
    reduced = blocks.mean(axis=tuple(range(1, 2 * img.ndim, 2)))
    return ImageTensor.from_array(reduced)


def downsample_to(img: ImageTensor, dims: Sequence[int]) -> ImageTensor:
    """Halve ``img`` with ``downsample2x`` until it has ``dims``.

    Raises:
        DimensionMismatchError: no number of halvings reaches ``dims``
    """
    dims = tuple(dims)
    current = img
    while current.dims != dims:
        if len(dims) != current.ndim or any(n < 2 * m for n, m in zip(current.dims, dims)):
            raise DimensionMismatchError(f"cannot reduce {img.dims} images to {dims}")
        current = downsample2x(current)
    return current
