"""Per-channel input standardization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DatasetError, ShapeError


@dataclass
class NormStats:
    """Training-split mean and std per channel, computed on 0..255 values."""
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if self.mean.shape != self.std.shape:
            raise ShapeError(f"mean {self.mean.shape} and std {self.std.shape} differ")

    @property
    def channels(self) -> int:
        return self.mean.size


def compute_stats(images: np.ndarray) -> NormStats:
    """images: (n, H, W, C) uint8."""
    data = np.asarray(images, dtype=np.float64)
    if data.ndim != 4:
        raise ShapeError(f"expected (n, H, W, C) images, got shape {data.shape}")
    mean = data.mean(axis=(0, 1, 2))
    std = data.std(axis=(0, 1, 2))
    flat = np.flatnonzero(std == 0)
    if flat.size:
        raise DatasetError(f"channel(s) {flat.tolist()} are constant across the training split")
    return NormStats(mean, std)


def normalize_input(x_raw: np.ndarray, stats: NormStats, dtype=np.float32) -> np.ndarray:
    """(n, H, W, C) 0..255 -> (n, C, H, W) standardized network input."""
    data = np.asarray(x_raw, dtype=np.float64)
    if data.shape[-1] != stats.channels:
        raise ShapeError(f"images have {data.shape[-1]} channels, stats have {stats.channels}")
    if np.any(stats.std == 0):
        raise DatasetError("normalization std is zero for some channel")
    out = (data - stats.mean) / stats.std
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2)).astype(dtype)


def float32_stats(stats: NormStats) -> NormStats:
    """Round stats to the precision checkpoints store them at."""
    return NormStats(stats.mean.astype(np.float32), stats.std.astype(np.float32))
