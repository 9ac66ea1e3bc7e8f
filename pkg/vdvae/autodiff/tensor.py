"""Tensor, differentiable function base class and the computation tape."""
from __future__ import annotations

import itertools
import logging
import threading
from contextlib import contextmanager
from typing import Any, Iterator, Sequence

import numpy as np

from ..errors import NonFiniteError, ShapeError

logger = logging.getLogger(__name__)


class _ModeState(threading.local):
    """Per-thread dtype and recording switches."""

    def __init__(self):
        self.default_dtype = np.dtype(np.float32)
        self.grad_enabled = True
        self.anomaly_mode = False


_mode = _ModeState()
_sequence = itertools.count()


def get_default_dtype() -> np.dtype:
    return _mode.default_dtype


def set_default_dtype(dtype) -> None:
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"Unsupported dtype: {dtype}")
    _mode.default_dtype = dtype


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the dtype used for new tensors (float64 for oracles)."""
    previous = _mode.default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def is_grad_enabled() -> bool:
    return _mode.grad_enabled


@contextmanager
def no_grad() -> Iterator[None]:
    """Run ops without recording them on the tape."""
    previous = _mode.grad_enabled
    _mode.grad_enabled = False
    try:
        yield
    finally:
        _mode.grad_enabled = previous


@contextmanager
def detect_anomaly() -> Iterator[None]:
    """Raise NonFiniteError as soon as an op turns finite inputs into NaN/Inf."""
    previous = _mode.anomaly_mode
    _mode.anomaly_mode = True
    try:
        yield
    finally:
        _mode.anomaly_mode = previous


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum out the axes numpy broadcasting added or stretched to reach grad.shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    """One differentiable op. Subclasses implement forward and backward on arrays.

    forward receives the input arrays (plus keyword options) and returns the
    output array. backward receives dL/d(output) and returns one gradient per
    input, or None for inputs that take no gradient.
    """

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs
        self.seq = next(_sequence)

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor | np.ndarray | float, **kwargs: Any) -> Tensor:
        tensors = tuple(as_tensor(x) for x in inputs)
        fn = cls(*tensors)
        out = fn.forward(*(t.data for t in tensors), **kwargs)
        out = np.asarray(out).astype(_result_dtype(tensors), copy=False)
        requires_grad = _mode.grad_enabled and any(t.requires_grad for t in tensors)
        if _mode.anomaly_mode:
            _check_anomaly(cls.__name__, tensors, out)
        return Tensor._wrap(out, fn if requires_grad else None, requires_grad)


def _result_dtype(tensors: tuple[Tensor, ...]) -> np.dtype:
    for t in tensors:
        if t.requires_grad:
            return t.dtype
    return tensors[0].dtype


def _check_anomaly(name: str, tensors: tuple[Tensor, ...], out: np.ndarray) -> None:
    if all(np.isfinite(t.data).all() for t in tensors) and not np.isfinite(out).all():
        raise NonFiniteError(f"{name} produced non-finite values from finite inputs")


class Tensor:
    """Dense n-dimensional array with an optional gradient.

    Leaf tensors created with requires_grad=True accumulate into .grad on every
    backward pass; call zero_grad() between steps.
    """

    def __init__(self, data: Any, requires_grad: bool = False, dtype=None):
        self.data = np.array(data, dtype=dtype or _mode.default_dtype)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._ctx: Function | None = None

    @classmethod
    def _wrap(cls, data: np.ndarray, ctx: Function | None, requires_grad: bool) -> Tensor:
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        t._ctx = ctx
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.shape:
            raise ShapeError(f"Gradient shape {grad.shape} != tensor shape {self.shape}")
        grad = grad.astype(self.dtype, copy=False)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got {self.shape}")
            grad = np.ones_like(self.data)
        ComputationTape(self).backward(np.asarray(grad, dtype=self.dtype))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # Operators are bound in ops.py to keep this module free of op definitions.


def as_tensor(value: Tensor | np.ndarray | float) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class ComputationTape:
    """Ordered record of the ops that produced a root tensor.

    Records are kept in execution order (each Function carries a global sequence
    number) and replayed in exactly the reverse order during backward.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.records = self._collect(root)

    @staticmethod
    def _collect(root: Tensor) -> list[Function]:
        seen: dict[int, Function] = {}
        stack = [root._ctx] if root._ctx is not None else []
        while stack:
            fn = stack.pop()
            if id(fn) in seen:
                continue
            seen[id(fn)] = fn
            for t in fn.inputs:
                if t._ctx is not None and id(t._ctx) not in seen:
                    stack.append(t._ctx)
        return sorted(seen.values(), key=lambda f: f.seq)

    def backward(self, grad: np.ndarray) -> None:
        root = self.root
        if not root.requires_grad:
            return
        if root._ctx is None:
            root.accumulate_grad(grad)
            return
        pending: dict[int, np.ndarray] = {id(root._ctx): grad}
        for fn in reversed(self.records):
            out_grad = pending.pop(id(fn), None)
            if out_grad is None:
                continue
            for t, g in zip(fn.inputs, fn.backward(out_grad)):
                if g is None or not t.requires_grad:
                    continue
                if t._ctx is None:
                    t.accumulate_grad(np.asarray(g))
                    continue
                key = id(t._ctx)
                pending[key] = pending[key] + g if key in pending else g
