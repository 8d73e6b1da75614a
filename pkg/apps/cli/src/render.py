"""
Landmark overlays

2D images become SVG figures: the image in grey with one red circle per
landmark, labelled with its landmark index. 3D volumes become axial PGM
slices with a bright cross burned in at every landmark whose nearest slice
is the one shown. Landmarks are placed with coordinate_to_index, so index
0 sits on the first pixel center and N−1 on the last.

SVG output is reproducible: element ids are salted with a constant and no
date is written.
"""

from pathlib import Path
from typing import Sequence

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from packages.tensor.src.image import coordinate_to_index
from packages.tensor.src.io import export_pgm

SVG_SALT = "morphoscope"
FIGURE_WIDTH = 6.0
MARKER_RADIUS = 2


def landmark_indices(points: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Continuous pixel indices (K × d) of normalized landmark coordinates."""
    points = np.asarray(points, dtype=np.float64)
    return np.column_stack([coordinate_to_index(points[:, a], n) for a, n in enumerate(dims)])


def overlay_svg(
    path: str | Path, array: np.ndarray, points: np.ndarray, labels: Sequence[int]
) -> None:
    """Draw landmarks (normalized K × 2) over a 2D array and save as SVG."""
    height, width = array.shape
    rows_cols = landmark_indices(points, array.shape)
    fig = Figure(figsize=(FIGURE_WIDTH, FIGURE_WIDTH * height / width))
    ax = fig.add_axes((0.0, 0.0, 1.0, 1.0))
    ax.imshow(array, cmap="gray", interpolation="nearest")
    ax.scatter(
        rows_cols[:, 1], rows_cols[:, 0], s=60, facecolors="none", edgecolors="red", linewidths=1
    )
    for label, (row, col) in zip(labels, rows_cols):
        ax.annotate(
            str(label),
            (col, row),
            xytext=(4, 4),
            textcoords="offset points",
            color="yellow",
            fontsize=8,
        )
    ax.set_xlim(-0.5, width - 0.5)
    ax.set_ylim(height - 0.5, -0.5)
    ax.set_axis_off()
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def nearest_slices(points: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Axial (axis 0) slice closest to each 3D landmark."""
    index = np.rint(landmark_indices(points, dims)[:, 0]).astype(np.intp)
    return np.clip(index, 0, dims[0] - 1)


def mark_slice(array: np.ndarray, rows_cols: np.ndarray, value: float) -> np.ndarray:
    """Copy of a 2D slice with a cross of ``value`` at each (row, col)."""
    marked = np.array(array, dtype=np.float64)
    height, width = marked.shape
    for row, col in np.rint(rows_cols).astype(np.intp):
        for offset in range(-MARKER_RADIUS, MARKER_RADIUS + 1):
            if 0 <= row + offset < height and 0 <= col < width:
                marked[row + offset, col] = value
            if 0 <= row < height and 0 <= col + offset < width:
                marked[row, col + offset] = value
    return marked


def overlay_slice_pgm(
    path: str | Path, volume: np.ndarray, points: np.ndarray, index: int
) -> int:
    """Write axial slice ``index`` with its landmarks marked; returns how many were drawn."""
    if not 0 <= index < volume.shape[0]:
        raise ValueError(f"slice {index} outside 0..{volume.shape[0] - 1}")
    on_slice = nearest_slices(points, volume.shape) == index
    rows_cols = landmark_indices(points[on_slice], volume.shape)[:, 1:]
    lo, hi = float(volume.min()), float(volume.max())
    export_pgm(path, mark_slice(volume[index], rows_cols, hi), lo=lo, hi=hi)
    return int(on_slice.sum())
