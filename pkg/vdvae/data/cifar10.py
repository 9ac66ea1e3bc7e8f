"""CIFAR-10 binary batches: records of 1 label byte + 3072 channel-major pixels."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..errors import DatasetError
from .dataset import Dataset, validation_split

logger = logging.getLogger(__name__)

RECORD_BYTES = 1 + 32 * 32 * 3
TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
TEST_FILE = "test_batch.bin"
VAL_SIZE = 5000
RECORDS_PER_FILE = 10000


def read_batch(path: str | Path, expected_records: int | None = None) -> np.ndarray:
    """One batch file -> (n, 32, 32, 3) uint8; labels dropped.

    With ``expected_records`` set, a file holding any other number of records is rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Missing CIFAR-10 file: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % RECORD_BYTES:
        raise DatasetError(f"{path.name}: length {raw.size} is not a multiple of {RECORD_BYTES}")
    records = raw.reshape(-1, RECORD_BYTES)
    if expected_records is not None and len(records) != expected_records:
        raise DatasetError(f"{path.name}: {len(records)} records, expected {expected_records}")
    return np.ascontiguousarray(records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1))


def load_cifar10_binary(directory: str | Path, seed: int = 0, val_size: int = VAL_SIZE,
                        records_per_file: int = RECORDS_PER_FILE) -> Dataset:
    directory = Path(directory)
    full = np.concatenate([read_batch(directory / name, records_per_file) for name in TRAIN_FILES])
    test_path = directory / TEST_FILE
    test = read_batch(test_path, records_per_file) if test_path.is_file() else None
    train_idx, val_idx = validation_split(len(full), val_size, seed)
    logger.info("Loaded CIFAR-10 from %s: %d train, %d val, %s test", directory, len(train_idx),
                len(val_idx), len(test) if test is not None else "no")
    return Dataset(train=full[train_idx], val=full[val_idx], test=test, provenance=f"cifar10:{directory}")
