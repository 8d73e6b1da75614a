"""
Tensor file I/O

Binary tensor format (all integers little-endian):

    "MSTN" | version u8 = 1 | dtype u8 = 1 (float64 LE) | ndim u8 ∈ {1..4}
    | reserved u8 = 0 | ndim × u32 dims | product(dims) × float64 payload

Binary PGM (P5) images are read and 8-bit P5 slices written through Pillow.
"""

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from packages.tensor.src.image import ImageTensor

MAGIC = b"MSTN"
FORMAT_VERSION = 1
DTYPE_FLOAT64 = 1
HEADER = struct.Struct("<4sBBBB")


class TensorFormatError(ValueError):
    """Base class for malformed tensor or image files."""


class BadMagicError(TensorFormatError):
    """File does not start with the expected magic bytes."""


class DtypeMismatchError(TensorFormatError):
    """Header declares a dtype other than float64."""


class TruncatedPayloadError(TensorFormatError):
    """File ends inside the header or inside a value."""


class SizeMismatchError(TensorFormatError):
    """Number of payload values differs from product(dims)."""


class UnsupportedFormatError(TensorFormatError):
    """Image encoding this reader does not handle."""


def encode_array(array: np.ndarray) -> bytes:
    """Serialize an array with 1-4 axes to the binary tensor format."""
    array = np.asarray(array, dtype=np.float64)
    if not 1 <= array.ndim <= 4:
        raise ValueError(f"tensor format holds 1-4 axes, got {array.ndim}")
    header = HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_FLOAT64, array.ndim, 0)
    dims = struct.pack(f"<{array.ndim}I", *array.shape)
    return header + dims + array.astype("<f8").tobytes(order="C")


def decode_array(raw: bytes) -> np.ndarray:
    """Parse the binary tensor format, raising a distinct error per defect."""
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < HEADER.size:
        raise TruncatedPayloadError("file ends inside the header")
    _, version, dtype, ndim, _ = HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"unsupported format version {version}")
    if dtype != DTYPE_FLOAT64:
        raise DtypeMismatchError(f"dtype code {dtype}, expected {DTYPE_FLOAT64} (float64)")
    if not 1 <= ndim <= 4:
        raise TensorFormatError(f"ndim {ndim} outside 1-4")
    offset = HEADER.size + 4 * ndim
    if len(raw) < offset:
        raise TruncatedPayloadError("file ends inside the dims block")
    dims = struct.unpack_from(f"<{ndim}I", raw, HEADER.size)
    payload = raw[offset:]
    if len(payload) % 8 != 0:
        raise TruncatedPayloadError(f"payload of {len(payload)} bytes ends inside a value")
    count = len(payload) // 8
    expected = int(np.prod(dims))
    if count != expected:
        raise SizeMismatchError(f"dims {dims} need {expected} values, payload has {count}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)


def write_array(path: str | Path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode_array(array))


def read_array(path: str | Path) -> np.ndarray:
    return decode_array(Path(path).read_bytes())


def save_tensor(path: str | Path, img: ImageTensor) -> None:
    """Write an image in the binary tensor format."""
    write_array(path, img.as_array())


def load_tensor(path: str | Path) -> ImageTensor:
    """Read an image written by save_tensor (byte-exact round trip).

    Raises:
        BadMagicError, DtypeMismatchError, TruncatedPayloadError,
        SizeMismatchError: for the corresponding file defects
        TensorFormatError: for non-finite intensities
    """
    array = read_array(path)
    if not np.all(np.isfinite(array)):
        raise TensorFormatError(f"{path}: tensor contains NaN or Inf")
    return ImageTensor.from_array(array)


def import_pgm(path: str | Path) -> ImageTensor:
    """Read a binary PGM (P5) and scale intensities to [0, 1] by maxval.

    Pillow decodes the file; 8-bit rasters open in mode ``L`` and 16-bit
    ones in mode ``I``, each rescaled by Pillow to its full range when
    maxval is smaller.

    Raises:
        UnsupportedFormatError: magic other than P5
        TruncatedPayloadError: raster shorter than width × height samples
        TensorFormatError: header Pillow cannot parse (maxval outside 1..65535)
    """
    path = Path(path)
    with path.open("rb") as f:
        magic = f.read(2)
    if magic != b"P5":
        raise UnsupportedFormatError(f"{path}: PGM magic {magic!r}; only binary P5 is supported")
    try:
        with Image.open(path, formats=["PPM"]) as im:
            width, height = im.size
            sample_bytes = 1 if im.mode == "L" else 2
            offset = im.tile[0][2]
            available = path.stat().st_size - offset
            needed = width * height * sample_bytes
            if available < needed:
                raise TruncatedPayloadError(f"{path}: PGM raster has {available} of {needed} bytes")
            values = np.asarray(im, dtype=np.float64)
            full_scale = 255.0 if im.mode == "L" else 65535.0
    except TensorFormatError:
        raise
    except (OSError, ValueError, SyntaxError) as e:
        raise TensorFormatError(f"{path}: unreadable PGM ({e})") from e
    return ImageTensor.from_array(values / full_scale)


def export_pgm(
    path: str | Path,
    array: np.ndarray,
    lo: float | None = None,
    hi: float | None = None,
) -> None:
    """Write a 2D array as an 8-bit P5 PGM, linearly mapping [lo, hi] to [0, 255]."""
    array = np.asarray(array, dtype=np.float64)
    if array.ndim != 2:
        raise ValueError(f"PGM export needs a 2D array, got shape {array.shape}")
    lo = float(array.min()) if lo is None else lo
    hi = float(array.max()) if hi is None else hi
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pixels = np.clip(np.rint((array - lo) * scale), 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PPM")
