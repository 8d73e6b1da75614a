"""
Landmark sets

K × d matrices of normalized coordinates. Row order is meaningful: row k of
a source set corresponds to row k of the target set.

Landmark text file:
    K d
    x_0 y_0 [z_0]
    ...
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class LandmarkMismatchError(ValueError):
    """Source and target landmark sets disagree in count or dimension."""


@dataclass(frozen=True)
class LandmarkSet:
    """Ordered landmark coordinates.

    Attributes:
        points: K × d array of finite normalized coordinates
    """

    points: np.ndarray

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] not in (2, 3):
            raise ValueError(f"landmarks must be K × 2 or K × 3, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ValueError("landmark coordinates must be finite")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def K(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def select(self, indices: list[int] | np.ndarray) -> "LandmarkSet":
        """Keep only the given rows, in the given order."""
        return LandmarkSet(self.points[np.asarray(indices, dtype=np.intp)])


def save_landmarks(path: str | Path, landmarks: LandmarkSet) -> None:
    """Write the plain-text landmark file (17 significant digits)."""
    lines = [f"{landmarks.K} {landmarks.d}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in landmarks.points]
    Path(path).write_text("\n".join(lines) + "\n")


def load_landmarks(path: str | Path) -> LandmarkSet:
    """Read a landmark file written by save_landmarks."""
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    if not rows or len(rows[0]) != 2:
        raise ValueError(f"{path}: first line must be 'K d'")
    k, d = int(rows[0][0]), int(rows[0][1])
    body = rows[1:]
    if len(body) != k or any(len(r) != d for r in body):
        raise ValueError(f"{path}: expected {k} rows of {d} values")
    return LandmarkSet(np.array(body, dtype=np.float64).reshape(k, d))
