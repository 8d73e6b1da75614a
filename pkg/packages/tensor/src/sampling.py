"""
Multilinear resampling

Bilinear (2D) / trilinear (3D) interpolation of an image at normalized
coordinates under the corner-aligned grid convention. Coordinates outside
[-1, 1] clamp to the border; the clamped component carries zero slope.
Cells are right-continuous: a coordinate on a cell edge belongs to the cell
on its right, except at the last node, which belongs to the last cell.
Coordinates within NODE_SNAP (index units) of a node sample it exactly.
"""

import itertools

import numpy as np

from packages.tensor.src.image import DimensionMismatchError, ImageTensor

# index-space distance within which a coordinate is treated as lying on a node
NODE_SNAP = 1e-9


def _cells(
    shape: tuple[int, ...], coords: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Grid sizes, lower cell corner, in-cell offset and the unclamped mask."""
    sizes = np.array(shape, dtype=np.float64)
    u = (coords + 1.0) * (sizes - 1.0) / 2.0
    nearest = np.round(u)
    u = np.where(np.abs(u - nearest) <= NODE_SNAP, nearest, u)
    inside = (u >= 0.0) & (u <= sizes - 1.0)
    u = np.clip(u, 0.0, sizes - 1.0)
    base = np.minimum(np.floor(u), sizes - 2.0).astype(np.intp)
    return sizes, base, u - base, inside


def interpolate(
    array: np.ndarray, coords: np.ndarray, with_gradient: bool = False
) -> tuple[np.ndarray, np.ndarray | None]:
    """Interpolate ``array`` at ``coords`` (N × d, normalized).

    Args:
        array: d-dimensional intensity grid, every axis of size ≥ 2
        coords: Points in normalized coordinates, one per row
        with_gradient: Also return ∂value/∂coords (N × d)

    Returns:
        (values, gradient) where gradient is None unless requested
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    d = array.ndim
    if coords.shape[1] != d:
        raise DimensionMismatchError(f"{coords.shape[1]}D coordinates for a {d}D image")
    if any(n < 2 for n in array.shape):
        raise DimensionMismatchError(f"every axis needs ≥ 2 nodes, got {array.shape}")

    sizes, base, t, inside = _cells(array.shape, coords)

    values = np.zeros(len(coords))
    slopes = np.zeros_like(coords) if with_gradient else None
    for corner in itertools.product((0, 1), repeat=d):
        offset = np.array(corner)
        pixel = array[tuple((base + offset).T)]
        factors = np.where(offset == 1, t, 1.0 - t)
        values += pixel * np.prod(factors, axis=1)
        if slopes is not None:
            for a in range(d):
                others = np.prod(np.delete(factors, a, axis=1), axis=1)
                sign = 1.0 if corner[a] == 1 else -1.0
                slopes[:, a] += sign * pixel * others

    if slopes is None:
        return values, None
    gradient = slopes * (sizes - 1.0) / 2.0 * inside
    return values, gradient


def interpolate_adjoint(
    shape: tuple[int, ...], coords: np.ndarray, cotangent: np.ndarray
) -> np.ndarray:
    """Transpose of interpolation w.r.t. the intensities.

    Scatters ``cotangent`` (one value per coordinate row) back onto a grid of
    ``shape`` with the same multilinear weights ``interpolate`` uses.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    _, base, t, _ = _cells(shape, coords)
    grid = np.zeros(shape)
    for corner in itertools.product((0, 1), repeat=len(shape)):
        offset = np.array(corner)
        weights = np.prod(np.where(offset == 1, t, 1.0 - t), axis=1)
        np.add.at(grid, tuple((base + offset).T), cotangent * weights)
    return grid


def sample(img: ImageTensor, coords: np.ndarray) -> np.ndarray:
    """Sample an image at normalized coordinates (N × d or a single point)."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim == 1:
        coords = coords[None, :]
    if coords.shape[1] != img.ndim:
        raise DimensionMismatchError(f"{coords.shape[1]}D coordinates for a {img.ndim}D image")
    values, _ = interpolate(img.as_array(), coords)
    return values
