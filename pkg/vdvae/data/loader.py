"""Dataset dispatch by name."""
from __future__ import annotations

from pathlib import Path

from ..errors import ConfigError, DatasetError
from .cifar10 import load_cifar10_binary
from .dataset import Dataset, validation_split
from .rawtensor import read_raw_tensor
from .synthetic import SyntheticConfig, generate_synthetic

DATASETS = ("cifar10", "raw", "synthetic")


def load_raw_dataset(path: str | Path, seed: int = 0, val_fraction: float = 0.1) -> Dataset:
    """A single VDVT file, or a directory holding train.vdvt and optional val.vdvt / test.vdvt."""
    path = Path(path)
    if path.is_dir():
        train = read_raw_tensor(path / "train.vdvt")
        test = read_raw_tensor(path / "test.vdvt") if (path / "test.vdvt").is_file() else None
        if (path / "val.vdvt").is_file():
            return Dataset(train, read_raw_tensor(path / "val.vdvt"), test, provenance=f"raw:{path}")
    else:
        train, test = read_raw_tensor(path), None
    n_val = max(1, int(round(len(train) * val_fraction)))
    train_idx, val_idx = validation_split(len(train), n_val, seed)
    return Dataset(train[train_idx], train[val_idx], test, provenance=f"raw:{path}")


def load_dataset(name: str, path: str | Path | None = None, seed: int = 0,
                 synthetic: SyntheticConfig | None = None) -> Dataset:
    """Deterministic given (name, path, seed)."""
    if name == "synthetic":
        config = synthetic or SyntheticConfig(seed=seed)
        return generate_synthetic(config)
    if name not in DATASETS:
        raise ConfigError(f"Unknown dataset {name!r}; expected one of {DATASETS}")
    if not path:
        raise ConfigError(f"dataset {name!r} needs data_path")
    if not Path(path).exists():
        raise DatasetError(f"data_path does not exist: {path}")
    if name == "cifar10":
        return load_cifar10_binary(path, seed=seed)
    return load_raw_dataset(path, seed=seed)
