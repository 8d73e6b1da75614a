"""
Shepp-Logan phantom

Additive ellipse phantom on the normalized grid. The ellipse tables use the
published (x, y) convention: x to the right, y up, rotation counterclockwise
from the x axis. A grid point with array-ordered coordinates (c0, c1) sits at
x = c1, y = −c0, so row 0 is the top of the head.

Two tables ship: the original one and the modified high-contrast one, which
is the default. The original interior contrast (±0.01 to ±0.02) all but
disappears under whitening and an L2 matching term.

The phantom is drawn at SCALE of the field of view so that perturbed control
points stay on the grid.

References:
- Shepp, L. A., Logan, B. F. (1974). "The Fourier reconstruction of a head
  section"
- Toft, P. (1996). "The Radon Transform: Theory and Implementation"
  (modified intensities)
"""

from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from packages.tensor.src.image import ImageTensor, grid_coordinates

SCALE = 0.8


class EllipseSpec(BaseModel):
    """One additive ellipse.

    Attributes:
        center: (x, y) center
        semi_axes: (a, b) semi-axes along the ellipse's own x and y
        rotation: Counterclockwise rotation in radians
        intensity: Value added inside the ellipse
    """

    center: tuple[float, float]
    semi_axes: tuple[float, float]
    rotation: float = 0.0
    intensity: float = Field(description="Additive intensity")

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def _check_axes(self) -> "EllipseSpec":
        if min(self.semi_axes) <= 0:
            raise ValueError(f"semi-axes must be positive, got {self.semi_axes}")
        return self

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        dx, dy = x - self.center[0], y - self.center[1]
        u = dx * c + dy * s
        v = -dx * s + dy * c
        a, b = self.semi_axes
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0

    def major_axis_endpoints(self) -> np.ndarray:
        """The two (x, y) ends of the longer axis."""
        a, b = self.semi_axes
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        axis = np.array([c, s]) * a if a >= b else np.array([-s, c]) * b
        center = np.array(self.center)
        return np.array([center + axis, center - axis])


def _table(rows: Sequence[tuple[float, ...]]) -> tuple[EllipseSpec, ...]:
    return tuple(
        EllipseSpec(
            intensity=value,
            semi_axes=(a, b),
            center=(x, y),
            rotation=np.deg2rad(theta),
        )
        for value, a, b, x, y, theta in rows
    )


# a, b, x, y, rotation (degrees); intensities per table below
_GEOMETRY = (
    (0.6900, 0.9200, 0.0000, 0.0000, 0.0),
    (0.6624, 0.8740, 0.0000, -0.0184, 0.0),
    (0.1100, 0.3100, 0.2200, 0.0000, -18.0),
    (0.1600, 0.4100, -0.2200, 0.0000, 18.0),
    (0.2100, 0.2500, 0.0000, 0.3500, 0.0),
    (0.0460, 0.0460, 0.0000, 0.1000, 0.0),
    (0.0460, 0.0460, 0.0000, -0.1000, 0.0),
    (0.0460, 0.0230, -0.0800, -0.6050, 0.0),
    (0.0230, 0.0230, 0.0000, -0.6060, 0.0),
    (0.0230, 0.0460, 0.0600, -0.6050, 0.0),
)
_ORIGINAL = (2.0, -0.98, -0.02, -0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01)
_MODIFIED = (1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1)

SHEPP_LOGAN = _table([(v, *g) for v, g in zip(_ORIGINAL, _GEOMETRY)])
MODIFIED_SHEPP_LOGAN = _table([(v, *g) for v, g in zip(_MODIFIED, _GEOMETRY)])
TABLES = {"original": SHEPP_LOGAN, "modified": MODIFIED_SHEPP_LOGAN}

# outer boundary and the two dark interior ellipses
CONTROL_ELLIPSES = (0, 2, 3)


def _table_for(table: Literal["original", "modified"]) -> tuple[EllipseSpec, ...]:
    if table not in TABLES:
        raise ValueError(f"unknown phantom table {table!r}; choose from {sorted(TABLES)}")
    return TABLES[table]


def to_grid(xy: np.ndarray, scale: float = SCALE) -> np.ndarray:
    """Phantom (x, y) to array-ordered normalized coordinates."""
    xy = np.atleast_2d(np.asarray(xy, dtype=np.float64))
    return scale * np.column_stack([-xy[:, 1], xy[:, 0]])


def phantom_intensity(
    points: np.ndarray,
    table: Literal["original", "modified"] = "modified",
    scale: float = SCALE,
) -> np.ndarray:
    """Phantom value at array-ordered normalized points (N × 2), clipped at 0."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x, y = points[:, 1] / scale, -points[:, 0] / scale
    values = np.zeros(len(points))
    for ellipse in _table_for(table):
        values += np.where(ellipse.contains(x, y), ellipse.intensity, 0.0)
    return np.maximum(values, 0.0)


def rasterize_phantom(
    dims: Sequence[int],
    table: Literal["original", "modified"] = "modified",
    scale: float = SCALE,
) -> ImageTensor:
    """Sample the phantom at every node of a square 2D grid (side ≥ 32)."""
    dims = tuple(int(n) for n in dims)
    if len(dims) != 2 or dims[0] != dims[1] or dims[0] < 32:
        raise ValueError(f"phantom needs square 2D dims of at least 32, got {dims}")
    if not 0.0 < scale <= 1.0:
        raise ValueError(f"scale must lie in (0, 1], got {scale}")
    values = phantom_intensity(grid_coordinates(dims), table, scale)
    return ImageTensor(dims=dims, data=values)


def control_points(scale: float = SCALE) -> np.ndarray:
    """The 6 warp control points: major-axis endpoints of the control ellipses.

    Returns:
        6 × 2 array in array-ordered normalized coordinates
    """
    ends = [MODIFIED_SHEPP_LOGAN[k].major_axis_endpoints() for k in CONTROL_ELLIPSES]
    return to_grid(np.vstack(ends), scale)
