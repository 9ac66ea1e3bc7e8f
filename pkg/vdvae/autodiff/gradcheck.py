"""Finite-difference gradient oracle and the per-op check suite."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import ops as F
from .tensor import Tensor, precision

logger = logging.getLogger(__name__)

ScalarFn = Callable[..., Tensor]


@dataclass
class GradCheckResult:
    name: str
    dtype: str
    shapes: list[tuple[int, ...]]
    max_rel_error: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dtype": self.dtype,
            "shapes": [list(s) for s in self.shapes],
            "max_rel_error": self.max_rel_error,
            "passed": self.passed,
        }


def numerical_gradient(fn: ScalarFn, arrays: Sequence[np.ndarray], eps: float = 1e-5) -> list[np.ndarray]:
    """Central differences of a scalar-valued fn, evaluated in float64."""
    with precision(np.float64):
        base = [np.array(a, dtype=np.float64) for a in arrays]
        grads = []
        for idx, arr in enumerate(base):
            grad = np.zeros_like(arr)
            flat, flat_grad = arr.reshape(-1), grad.reshape(-1)
            for j in range(flat.size):
                original = flat[j]
                flat[j] = original + eps
                plus = fn(*[Tensor(a) for a in base]).item()
                flat[j] = original - eps
                minus = fn(*[Tensor(a) for a in base]).item()
                flat[j] = original
                flat_grad[j] = (plus - minus) / (2.0 * eps)
            grads.append(grad)
    return grads


def analytic_gradient(fn: ScalarFn, arrays: Sequence[np.ndarray], dtype=np.float64) -> list[np.ndarray]:
    with precision(dtype):
        tensors = [Tensor(a, requires_grad=True) for a in arrays]
        fn(*tensors).backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]


# Below this magnitude the comparison becomes absolute: rtol * DENOM_FLOOR.
DENOM_FLOOR = 1e-2


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = DENOM_FLOOR) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, floor)."""
    analytic = analytic.astype(np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def gradcheck(fn: ScalarFn, arrays: Sequence[np.ndarray], *, dtype=np.float64,
              eps: float | None = None, rtol: float | None = None, name: str = "fn") -> GradCheckResult:
    """Compare the analytic gradient (in dtype) with the float64 finite-difference oracle.

    Defaults follow the two tolerance regimes: float64 uses step 1e-5 and rtol
    1e-6, float32 uses step 1e-3 and rtol 1e-3.
    """
    single = np.dtype(dtype) == np.float32
    eps = eps if eps is not None else (1e-3 if single else 1e-5)
    rtol = rtol if rtol is not None else (1e-3 if single else 1e-6)
    analytic = analytic_gradient(fn, arrays, dtype)
    numeric = numerical_gradient(fn, arrays, eps)
    err = max((relative_error(a, n) for a, n in zip(analytic, numeric)), default=0.0)
    return GradCheckResult(
        name=name,
        dtype=np.dtype(dtype).name,
        shapes=[tuple(np.shape(a)) for a in arrays],
        max_rel_error=err,
        passed=bool(err < rtol),
    )


# ------------------------------------------------------------------ op suite

def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    # A random projection keeps every output element in play with distinct weights.
    return F.sum(F.mul(out, Tensor(weights.astype(out.dtype))))


def _small_shape(rng: np.random.Generator) -> tuple[int, ...]:
    return tuple(int(d) for d in rng.integers(1, 4, size=int(rng.integers(1, 4))))


def _unary(op: Callable[[Tensor], Tensor], low: float = -2.0, high: float = 2.0):
    def build(rng):
        shape = _small_shape(rng)
        weights = rng.standard_normal(shape)
        return (lambda x: _weighted(op(x), weights)), [rng.uniform(low, high, shape)]
    return build


def _binary(op: Callable[[Tensor, Tensor], Tensor], positive_b: bool = False):
    def build(rng):
        shape = _small_shape(rng)
        b_shape = shape[-1:] if rng.random() < 0.5 else shape
        b = rng.uniform(0.5, 2.0, b_shape) if positive_b else rng.standard_normal(b_shape)
        weights = rng.standard_normal(shape)
        return (lambda x, y: _weighted(op(x, y), weights)), [rng.standard_normal(shape), b]
    return build


def _conv(rng):
    groups = int(rng.choice([1, 2]))
    c_in = groups * int(rng.integers(1, 3))
    c_out = groups * int(rng.integers(1, 3))
    k = int(rng.choice([1, 3]))
    stride = int(rng.choice([1, 2]))
    size = int(rng.integers(k, 6))
    padding = k // 2 if stride == 1 else 0
    x = rng.standard_normal((2, c_in, size, size))
    w = rng.standard_normal((c_out, c_in // groups, k, k)) * 0.5
    b = rng.standard_normal(c_out)
    out_size = (size + 2 * padding - k) // stride + 1
    weights = rng.standard_normal((2, c_out, out_size, out_size))
    fn = lambda x_, w_, b_: _weighted(F.conv2d(x_, w_, b_, stride, padding, groups), weights)  # noqa: E731
    return fn, [x, w, b]


def _pool(rng):
    factor = int(rng.choice([1, 2]))
    size = factor * int(rng.integers(1, 4))
    x = rng.standard_normal((2, 2, size, size))
    weights = rng.standard_normal((2, 2, size // factor, size // factor))
    return (lambda x_: _weighted(F.avg_pool(x_, factor), weights)), [x]


def _upsample(rng):
    factor = int(rng.choice([1, 2, 3]))
    x = rng.standard_normal((1, 2, 2, 2))
    weights = rng.standard_normal((1, 2, 2 * factor, 2 * factor))
    return (lambda x_: _weighted(F.nn_upsample(x_, factor), weights)), [x]


def _linear(rng):
    n, d_in, d_out = (int(v) for v in rng.integers(1, 4, size=3))
    weights = rng.standard_normal((n, d_out))
    arrays = [rng.standard_normal((n, d_in)), rng.standard_normal((d_out, d_in)), rng.standard_normal(d_out)]
    return (lambda x, w, b: _weighted(F.linear(x, w, b), weights)), arrays


def _reduction(kind: str):
    def build(rng):
        shape = (int(rng.integers(1, 4)), int(rng.integers(2, 4)))
        axis = int(rng.integers(0, 2))
        weights = rng.standard_normal(shape[1 - axis])
        op = {"sum": F.sum, "mean": F.mean, "logsumexp": F.logsumexp}[kind]
        return (lambda x: _weighted(op(x, axis=axis), weights)), [rng.standard_normal(shape)]
    return build


def _log_softmax(rng):
    shape = (int(rng.integers(1, 4)), int(rng.integers(2, 5)))
    weights = rng.standard_normal(shape)
    return (lambda x: _weighted(F.log_softmax(x, axis=1), weights)), [rng.standard_normal(shape)]


def _concat_slice(rng):
    a, b = rng.standard_normal((1, 2, 2, 2)), rng.standard_normal((1, 3, 2, 2))
    weights = rng.standard_normal((1, 3, 2, 2))

    def fn(x, y):
        return _weighted(F.slice_channels(F.concat_channels([x, y]), 1, 4), weights)
    return fn, [a, b]


def _reshape(rng):
    x = rng.standard_normal((2, 3, 2))
    weights = rng.standard_normal((3, 4))
    return (lambda x_: _weighted(F.reshape(x_, (3, 4)), weights)), [x]


def _broadcast(rng):
    x = rng.standard_normal((1, 3, 1, 1))
    weights = rng.standard_normal((2, 3, 2, 2))
    return (lambda x_: _weighted(F.broadcast(x_, (2, 3, 2, 2)), weights)), [x]


def _where(rng):
    shape = _small_shape(rng)
    cond = rng.random(shape) < 0.5
    weights = rng.standard_normal(shape)
    return (lambda x, y: _weighted(F.where(cond, x, y), weights)), [rng.standard_normal(shape), rng.standard_normal(shape)]


OP_CASES: dict[str, Callable] = {
    "add": _binary(F.add),
    "sub": _binary(F.sub),
    "mul": _binary(F.mul),
    "div": _binary(F.div, positive_b=True),
    "neg": _unary(F.neg),
    "scale": _unary(lambda x: F.scale(x, 1.7)),
    "square": _unary(F.square),
    "exp": _unary(F.exp),
    "log": _unary(F.log, low=0.5, high=3.0),
    "tanh": _unary(F.tanh),
    "sigmoid": _unary(F.sigmoid),
    "softplus": _unary(F.softplus),
    "gelu": _unary(F.gelu),
    "clamp_min": _unary(lambda x: F.clamp_min(x, 0.3), low=0.5, high=2.0),
    "sum": _reduction("sum"),
    "mean": _reduction("mean"),
    "logsumexp": _reduction("logsumexp"),
    "log_softmax": _log_softmax,
    "where": _where,
    "broadcast": _broadcast,
    "reshape": _reshape,
    "concat_slice": _concat_slice,
    "linear": _linear,
    "conv2d": _conv,
    "avg_pool": _pool,
    "nn_upsample": _upsample,
}


def run_gradcheck_suite(shapes_per_op: int = 20, seed: int = 0,
                        dtypes: Sequence = (np.float64, np.float32)) -> list[GradCheckResult]:
    """Check every differentiable op on shapes_per_op random draws per dtype."""
    rng = np.random.default_rng(seed)
    results = []
    for name, build in OP_CASES.items():
        for dtype in dtypes:
            for _ in range(shapes_per_op):
                fn, arrays = build(rng)
                result = gradcheck(fn, arrays, dtype=dtype, name=name)
                if not result.passed:
                    logger.warning("gradcheck failed: %s %s shapes=%s err=%.3g",
                                   name, result.dtype, result.shapes, result.max_rel_error)
                results.append(result)
    return results
