"""
Shape matrices

One row per image: the kept landmarks of that image flattened landmark-major
(x0, y0[, z0], x1, y1, ...). Rows carry an image id and an optional class
label.

CSV layout:

    id,label,x0,y0,x1,y1,...        (2D)
    id,label,x0,y0,z0,x1,y1,z1,...  (3D)
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class ShapeMatrix:
    """n × (K·d) landmark descriptors.

    Attributes:
        values: Flattened landmarks, one row per image
        d: Spatial dimension of each landmark
        ids: Image identifiers, one per row
        labels: Class labels ("" when unknown), one per row
    """

    values: np.ndarray
    d: int
    ids: list[str] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"shape matrix must be 2D, got shape {values.shape}")
        if self.d not in (2, 3) or values.shape[1] % self.d != 0:
            raise ValueError(f"{values.shape[1]} columns do not split into {self.d}D landmarks")
        if not np.all(np.isfinite(values)):
            raise ValueError("shape matrix has missing or non-finite entries")
        n = values.shape[0]
        ids = list(self.ids) or [str(i) for i in range(n)]
        labels = list(self.labels) or [""] * n
        if len(ids) != n or len(labels) != n:
            raise ValueError(f"{len(ids)} ids and {len(labels)} labels for {n} rows")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1] // self.d

    def landmarks(self) -> np.ndarray:
        """Back to n × K × d."""
        return self.values.reshape(self.n, self.K, self.d)

    def rows(self, mask: np.ndarray | Sequence[bool]) -> "ShapeMatrix":
        mask = np.asarray(mask, dtype=bool)
        return ShapeMatrix(
            values=self.values[mask],
            d=self.d,
            ids=[i for i, keep in zip(self.ids, mask) if keep],
            labels=[label for label, keep in zip(self.labels, mask) if keep],
        )

    def columns(self) -> list[str]:
        return [f"{AXES[a]}{k}" for k in range(self.K) for a in range(self.d)]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=self.columns())
        frame.insert(0, "label", self.labels)
        frame.insert(0, "id", self.ids)
        return frame


def shape_matrix_from_landmarks(
    landmarks: np.ndarray | Sequence[np.ndarray],
    ids: Sequence[str] | None = None,
    labels: Sequence[str] | None = None,
    kept: Sequence[int] | None = None,
) -> ShapeMatrix:
    """Stack per-image landmark arrays (K × d each) into a ShapeMatrix.

    Args:
        landmarks: n × K × d array or a list of K × d arrays
        ids: Row identifiers (default "0", "1", ...)
        labels: Class labels (default empty)
        kept: Landmark indices to keep, e.g. from culling
    """
    stack = np.asarray(landmarks, dtype=np.float64)
    if stack.ndim != 3:
        raise ValueError(f"landmarks must stack to n × K × d, got shape {stack.shape}")
    if kept is not None:
        stack = stack[:, np.asarray(kept, dtype=np.intp)]
    n, K, d = stack.shape
    return ShapeMatrix(
        values=stack.reshape(n, K * d),
        d=d,
        ids=[str(i) for i in ids] if ids is not None else [],
        labels=[str(label) for label in labels] if labels is not None else [],
    )


def write_shape_matrix(path: str | Path, shape: ShapeMatrix) -> None:
    shape.to_frame().to_csv(path, index=False, float_format="%.17g")


def read_shape_matrix(path: str | Path) -> ShapeMatrix:
    """Read a shape CSV; the dimension is inferred from the coordinate headers."""
    frame = pd.read_csv(
        path,
        dtype={"id": str, "label": str},
        keep_default_na=False,
        float_precision="round_trip",
    )
    if list(frame.columns[:2]) != ["id", "label"]:
        raise ValueError(f"{path}: header must start with 'id,label'")
    coords = list(frame.columns[2:])
    d = 3 if "z0" in coords else 2
    expected = [f"{AXES[a]}{k}" for k in range(len(coords) // d) for a in range(d)]
    if coords != expected:
        raise ValueError(f"{path}: coordinate columns must be x0,y0[,z0],x1,... in order")
    return ShapeMatrix(
        values=frame[coords].to_numpy(dtype=np.float64),
        d=d,
        ids=list(frame["id"]),
        labels=list(frame["label"]),
    )
