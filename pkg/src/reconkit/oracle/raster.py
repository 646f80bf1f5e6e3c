"""Bit-exact binary raster format.

Layout (little-endian): magic bytes "R3RB", u32 height, u32 width,
u32 channels, u32 dtype tag, then the row-major payload.  Dtype tags:
1 = float32, 2 = float64, 3 = uint8.  Oracle bundles store float64 rasters
(validity and label grids as uint8); float32 is supported for externally
produced data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"R3RB"
HEADER = struct.Struct("<4sIIII")

DTYPE_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("u1")}
TAG_FOR_KIND = {"f4": 1, "f8": 2, "u1": 3}


class RasterError(ValueError):
    """Base class for raster format violations."""


class BadMagicError(RasterError):
    pass


class TruncatedRasterError(RasterError):
    pass


class UnknownDtypeError(RasterError):
    pass


def write_raster(path, array: np.ndarray):
    """Write an HxW or HxWxC array; dtype must be float32, float64 or uint8."""
    arr = np.asarray(array)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise RasterError(f"raster must be HxW or HxWxC, got shape {arr.shape}")
    key = f"{arr.dtype.kind}{arr.dtype.itemsize}"
    if key not in TAG_FOR_KIND:
        raise UnknownDtypeError(f"unsupported raster dtype {arr.dtype}")
    tag = TAG_FOR_KIND[key]
    h, w, c = arr.shape
    payload = np.ascontiguousarray(arr, dtype=DTYPE_TAGS[tag]).tobytes()
    Path(path).write_bytes(HEADER.pack(MAGIC, h, w, c, tag) + payload)


def read_raster(path) -> np.ndarray:
    """Read a raster; returns HxW for single-channel files, else HxWxC."""
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise TruncatedRasterError(
            f"{path}: truncated header, got {len(data)} of {HEADER.size} bytes"
        )
    magic, h, w, c, tag = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if tag not in DTYPE_TAGS:
        raise UnknownDtypeError(f"{path}: unknown dtype tag {tag}")
    dtype = DTYPE_TAGS[tag]
    expected = HEADER.size + h * w * c * dtype.itemsize
    if len(data) != expected:
        raise TruncatedRasterError(
            f"{path}: truncated raster at byte {len(data)}, expected {expected} bytes"
        )
    arr = np.frombuffer(data, dtype=dtype, offset=HEADER.size).reshape(h, w, c)
    if c == 1:
        arr = arr[:, :, 0]
    return arr.copy()
