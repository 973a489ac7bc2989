"""Grayscale image arrays, binary PGM/PPM I/O and normalization.

Images are plain 2D ``float64`` numpy arrays indexed ``[row, column]``
(``shape == (height, width)``).  Files hold quantized samples; in memory
everything is kept in double precision.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

__all__ = [
    "PNMError",
    "UnsupportedFormatError",
    "MalformedHeaderError",
    "TruncatedDataError",
    "ValueRangeError",
    "ShapeMismatchError",
    "as_image",
    "load_pgm",
    "save_pgm",
    "save_ppm",
    "normalize",
    "quantize",
    "quantize_u8",
]


class PNMError(ValueError):
    """Base class for problems with the contents of a PGM/PPM file."""


class UnsupportedFormatError(PNMError):
    pass


class MalformedHeaderError(PNMError):
    pass


class TruncatedDataError(PNMError):
    pass


class ValueRangeError(ValueError):
    """Sample values outside the range an operation accepts."""


class ShapeMismatchError(ValueError):
    """Images or bands that must share dimensions do not."""


_BIT_DEPTHS = {8: 255, 16: 65535}


def as_image(data, name: str = "image") -> np.ndarray:
    """Validate ``data`` as a 2D finite image and return it as ``float64``."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2D, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ShapeMismatchError(f"{name} must be at least 1x1, got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueRangeError(f"{name} contains NaN or Inf")
    return img


def _check_unit_range(img: np.ndarray, name: str = "image") -> None:
    lo, hi = float(img.min()), float(img.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueRangeError(
            f"{name} values must lie in [0, 1], got [{lo:.6g}, {hi:.6g}]; normalize first"
        )


def quantize(img, maxval: int) -> np.ndarray:
    """Map unit-range samples to integers ``round(v * maxval)``, halves rounded up.

    Raises ValueRangeError for samples outside [0, 1].
    """
    img = as_image(img)
    _check_unit_range(img)
    q = np.floor(img * maxval + 0.5)
    return np.clip(q, 0, maxval).astype(np.int64)


def quantize_u8(img) -> np.ndarray:
    """8-bit gray levels of a unit-range image, as ``uint8``."""
    return quantize(img, 255).astype(np.uint8)


def normalize(img) -> np.ndarray:
    """Affinely rescale ``img`` to [0, 1]; a constant image maps to all zeros."""
    img = as_image(img)
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros_like(img)
    out = (img - lo) / (hi - lo)
    # Pin the extremes so the result is exactly [0, 1] and idempotent.
    out[img == lo] = 0.0
    out[img == hi] = 1.0
    return out


def _read_header(buf: bytes, n_fields: int) -> tuple[bytes, list[int], int]:
    """Parse ``magic`` plus ``n_fields`` integers, skipping ``#`` comments.

    Returns the magic, the integer fields and the offset of the first data byte.
    """
    pos = 0
    tokens: list[bytes] = []
    n = len(buf)
    while len(tokens) < n_fields + 1:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise MalformedHeaderError("unexpected end of file inside header")
        if buf[pos : pos + 1] == b"#":
            eol = buf.find(b"\n", pos)
            if eol < 0:
                raise MalformedHeaderError("unterminated comment in header")
            pos = eol + 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(buf[start:pos])
    magic = tokens[0]
    try:
        fields = [int(t) for t in tokens[1:]]
    except ValueError:
        raise MalformedHeaderError(f"non-integer header field in {tokens[1:]!r}") from None
    if pos >= n or not buf[pos : pos + 1].isspace():
        raise MalformedHeaderError("header must end with a single whitespace byte")
    return magic, fields, pos + 1


def load_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary (P5) PGM file into a unit-range ``float64`` array.

    Samples are divided by the file's maxval; 16-bit samples are big-endian.

    Raises
    ------
    FileNotFoundError
        ``path`` does not exist.
    UnsupportedFormatError
        The magic number is not ``P5``.
    MalformedHeaderError
        The header cannot be parsed or has out-of-range fields.
    TruncatedDataError
        Fewer sample bytes than ``width * height`` samples need.
    """
    buf = Path(path).read_bytes()
    if len(buf) < 2:
        raise MalformedHeaderError(f"{path}: file too short for a PGM header")
    if buf[:2] != b"P5":
        raise UnsupportedFormatError(f"{path}: unsupported magic {buf[:2]!r}, expected b'P5'")
    magic, fields, offset = _read_header(buf, 3)
    if magic != b"P5":
        raise UnsupportedFormatError(f"{path}: unsupported magic {magic!r}, expected b'P5'")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"{path}: invalid dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise MalformedHeaderError(f"{path}: maxval {maxval} outside 1..65535")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    payload = buf[offset : offset + need]
    if len(payload) < need:
        raise TruncatedDataError(
            f"{path}: expected {need} sample bytes, found {len(payload)}"
        )
    samples = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return samples.astype(np.float64) / maxval


def save_pgm(img, path: str | os.PathLike, depth: int = 8) -> None:
    """Write a unit-range image as binary PGM at 8 or 16 bits per sample."""
    if depth not in _BIT_DEPTHS:
        raise ValueError(f"bit depth must be 8 or 16, got {depth}")
    maxval = _BIT_DEPTHS[depth]
    q = quantize(img, maxval)
    height, width = q.shape
    dtype = ">u2" if depth == 16 else "u1"
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(q.astype(dtype).tobytes())


def save_ppm(rgb, path: str | os.PathLike) -> None:
    """Write an ``(height, width, 3)`` unit-range RGB array as 8-bit binary PPM (P6)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ShapeMismatchError(f"RGB image must have shape (h, w, 3), got {rgb.shape}")
    if not np.all(np.isfinite(rgb)) or rgb.min() < 0.0 or rgb.max() > 1.0:
        raise ValueRangeError("RGB values must be finite and lie in [0, 1]")
    q = np.clip(np.floor(rgb * 255 + 0.5), 0, 255).astype(np.uint8)
    height, width = q.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(q.tobytes())
