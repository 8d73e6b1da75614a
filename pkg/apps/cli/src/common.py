"""Helpers shared by the subcommands."""

import json
import math
from pathlib import Path
from typing import Any

from packages.tensor.src.image import ImageTensor
from packages.tensor.src.io import import_pgm, load_tensor


class UsageError(ValueError):
    """Flags are individually valid but do not fit together."""


def load_image(path: str | Path) -> ImageTensor:
    """Binary tensor, or a P5 PGM when the suffix is .pgm."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such image")
    if path.suffix.lower() == ".pgm":
        return import_pgm(path)
    return load_tensor(path)


def output_dir(path: str | Path) -> Path:
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _finite_or_none(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _finite_or_none(v) for key, v in value.items()}
    if isinstance(value, list):
        return [_finite_or_none(v) for v in value]
    return value


def write_json(path: str | Path, payload: dict[str, Any]) -> None:
    """Strict JSON: NaN and infinities are written as null."""
    Path(path).write_text(json.dumps(_finite_or_none(payload), indent=2) + "\n")
