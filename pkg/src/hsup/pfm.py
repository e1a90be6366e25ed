"""Minimal PFM (portable float map) reader/writer for depth rasters.

Grayscale ``Pf`` maps only.  The scale-line sign encodes endianness; we always
write little-endian (negative scale).  Per the PFM convention, rows are stored
bottom-to-top.
"""

from __future__ import annotations

import numpy as np


class PfmError(ValueError):
    pass


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM file into a (height, width) float64 array."""
    with open(path, "rb") as f:
        data = f.read()
    try:
        header, rest = data.split(b"\n", 1)
        dims_line, rest = rest.split(b"\n", 1)
        scale_line, payload = rest.split(b"\n", 1)
    except ValueError:
        raise PfmError(f"{path}: truncated PFM header") from None
    if header.strip() != b"Pf":
        raise PfmError(f"{path}: not a grayscale PFM file (header {header!r})")
    try:
        width, height = (int(x) for x in dims_line.split())
        scale = float(scale_line)
    except ValueError:
        raise PfmError(f"{path}: malformed PFM dimensions or scale") from None
    if width < 1 or height < 1 or scale == 0:
        raise PfmError(f"{path}: invalid PFM dimensions or scale")
    dtype = "<f4" if scale < 0 else ">f4"
    expected = width * height * 4
    if len(payload) < expected:
        raise PfmError(f"{path}: truncated PFM payload")
    raster = np.frombuffer(payload[:expected], dtype=dtype).reshape(height, width)
    values = raster[::-1].astype(np.float64)
    if abs(scale) != 1.0:
        values = values * abs(scale)
    return values


def write_pfm(path, values: np.ndarray) -> None:
    """Write a (height, width) array as a little-endian grayscale PFM file."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise PfmError("PFM raster must be 2-D")
    height, width = arr.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{width} {height}\n".encode())
        f.write(b"-1.0\n")
        f.write(arr[::-1].astype("<f4").tobytes())
