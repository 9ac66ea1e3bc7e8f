"""Raw image tensors: b"VDVT", then n, h, w, c as little-endian u32, then uint8 data."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DatasetError

MAGIC = b"VDVT"
_HEADER = struct.Struct("<4s4I")


def write_raw_tensor(path: str | Path, images: np.ndarray) -> None:
    images = np.asarray(images)
    if images.dtype != np.uint8 or images.ndim != 4:
        raise DatasetError(f"raw tensors hold uint8 (n, H, W, C) images, got {images.dtype} {images.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *images.shape))
        fh.write(np.ascontiguousarray(images).tobytes())


def read_raw_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Missing raw tensor file: {path}")
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise DatasetError(f"{path.name}: truncated header")
    magic, n, h, w, c = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DatasetError(f"{path.name}: bad magic {magic!r}")
    expected = n * h * w * c
    if len(blob) - _HEADER.size != expected:
        raise DatasetError(f"{path.name}: expected {expected} data bytes, found {len(blob) - _HEADER.size}")
    return np.frombuffer(blob, dtype=np.uint8, offset=_HEADER.size).reshape(n, h, w, c).copy()
