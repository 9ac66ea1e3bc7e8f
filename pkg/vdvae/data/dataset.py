"""In-memory image datasets and the train/validation split."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DatasetError

SPLITS = ("train", "val", "test")


@dataclass
class Dataset:
    """uint8 images shaped (n, H, W, C) per split; labels are never kept."""
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self):
        for name in SPLITS:
            images = getattr(self, name)
            if images is None:
                continue
            if images.dtype != np.uint8 or images.ndim != 4:
                raise DatasetError(f"{name} split must be uint8 (n, H, W, C), got {images.dtype} {images.shape}")

    @property
    def image_size(self) -> int:
        return self.train.shape[1]

    @property
    def channels(self) -> int:
        return self.train.shape[3]

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise DatasetError(f"Unknown split {name!r}; expected one of {SPLITS}")
        images = getattr(self, name)
        if images is None or len(images) == 0:
            raise DatasetError(f"Split {name!r} is absent from {self.provenance or 'dataset'}")
        return images

    def subset(self, n: int) -> Dataset:
        """First n training images; other splits unchanged."""
        return Dataset(self.train[:n], self.val, self.test, f"{self.provenance}[:{n}]")


def validation_split(n_total: int, n_val: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (train_idx, val_idx) covering range(n_total), drawn by a seeded shuffle."""
    if not 0 < n_val < n_total:
        raise DatasetError(f"Cannot take {n_val} validation images from {n_total}")
    order = np.random.default_rng(seed).permutation(n_total)
    return np.sort(order[n_val:]), np.sort(order[:n_val])
