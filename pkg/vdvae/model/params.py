"""Named parameter store."""
from __future__ import annotations

import hashlib
from typing import Iterator

import numpy as np

from ..autodiff import Tensor, get_default_dtype
from ..errors import ConfigError, ShapeError


class Parameters:
    """Ordered map from hierarchical names ("decoder.l3.posterior.c1.weight") to tensors.

    Iteration follows registration order. After freeze() the key set is fixed.
    """

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._frozen = False

    def register(self, name: str, value: np.ndarray) -> Tensor:
        if self._frozen:
            raise ConfigError(f"Cannot register {name!r}: parameter set is frozen")
        if name in self._tensors:
            raise ConfigError(f"Duplicate parameter name {name!r}")
        tensor = Tensor(value, requires_grad=True, dtype=get_default_dtype())
        self._tensors[name] = tensor
        return tensor

    def freeze(self) -> Parameters:
        self._frozen = True
        return self

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())

    def count(self) -> int:
        """Total number of scalar parameters."""
        return int(sum(t.size for t in self._tensors.values()))

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self._tensors):
            missing = sorted(set(self._tensors) - set(arrays))
            extra = sorted(set(arrays) - set(self._tensors))
            raise ShapeError(f"Parameter keys differ: missing={missing[:5]} extra={extra[:5]}")
        for name, t in self._tensors.items():
            value = np.asarray(arrays[name])
            if value.shape != t.shape:
                raise ShapeError(f"{name}: shape {value.shape} != {t.shape}")
            t.data = value.astype(t.dtype, copy=True)

    def copy(self, requires_grad: bool = True) -> Parameters:
        clone = Parameters()
        for name, t in self._tensors.items():
            clone._tensors[name] = Tensor(t.data.copy(), requires_grad=requires_grad, dtype=t.dtype)
        clone._frozen = self._frozen
        return clone

    def fingerprint(self) -> str:
        """Hash of names and shapes; equal fingerprints mean identical parameterization."""
        digest = hashlib.sha256()
        for name, t in self._tensors.items():
            digest.update(f"{name}:{t.shape};".encode())
        return digest.hexdigest()[:16]
