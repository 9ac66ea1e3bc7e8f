"""Differentiable ops over Tensor.

Every op is a Function subclass with an array-level forward/backward pair and a
lower-case functional wrapper. Binary elementwise ops follow numpy broadcasting.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from ..errors import MissingGradientError, ShapeError
from .tensor import Function, Tensor, as_tensor, unbroadcast

_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------- elementwise

class Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        a, b = self.inputs
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)


class Sub(Function):
    def forward(self, a, b):
        return a - b

    def backward(self, grad):
        a, b = self.inputs
        return unbroadcast(grad, a.shape), unbroadcast(-grad, b.shape)


class Mul(Function):
    def forward(self, a, b):
        return a * b

    def backward(self, grad):
        a, b = self.inputs
        return unbroadcast(grad * b.data, a.shape), unbroadcast(grad * a.data, b.shape)


class Div(Function):
    def forward(self, a, b):
        return a / b

    def backward(self, grad):
        a, b = self.inputs
        ga = grad / b.data
        gb = -grad * a.data / (b.data * b.data)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Scale(Function):
    def forward(self, a, factor: float = 1.0):
        self.factor = factor
        return a * factor

    def backward(self, grad):
        return (grad * self.factor,)


class Square(Function):
    def forward(self, a):
        return a * a

    def backward(self, grad):
        return (2.0 * grad * self.inputs[0].data,)


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, a):
        return np.log(a)

    def backward(self, grad):
        return (grad / self.inputs[0].data,)


class Tanh(Function):
    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out * self.out),)


class Sigmoid(Function):
    def forward(self, a):
        self.out = special.expit(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Softplus(Function):
    def forward(self, a):
        return np.logaddexp(0.0, a)

    def backward(self, grad):
        return (grad * special.expit(self.inputs[0].data),)


class Gelu(Function):
    """Exact GELU, x * Phi(x) with Phi written through erf."""

    def forward(self, a):
        self.cdf = 0.5 * (1.0 + special.erf(a * _SQRT_HALF))
        return a * self.cdf

    def backward(self, grad):
        a = self.inputs[0].data
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * a * a)
        return (grad * (self.cdf + a * pdf),)


class ClampMin(Function):
    def forward(self, a, low: float = 0.0):
        self.mask = a >= low
        return np.maximum(a, low)

    def backward(self, grad):
        return (grad * self.mask,)


class Where(Function):
    """Select elementwise between a and b under a constant boolean condition."""

    def forward(self, a, b, condition: np.ndarray = None):
        self.condition = np.asarray(condition, dtype=bool)
        return np.where(self.condition, a, b)

    def backward(self, grad):
        a, b = self.inputs
        ga = np.where(self.condition, grad, 0.0)
        gb = np.where(self.condition, 0.0, grad)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)


# ----------------------------------------------------------------- reductions

def _expand_reduced(grad: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(grad.reshape((1,) * len(shape)) if grad.ndim else grad, shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        grad = np.expand_dims(grad, axes)
    return np.broadcast_to(grad, shape)


class Sum(Function):
    def forward(self, a, axis=None, keepdims: bool = False):
        self.axis, self.keepdims = axis, keepdims
        return np.sum(a, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        return (_expand_reduced(grad, self.inputs[0].shape, self.axis, self.keepdims),)


class LogSumExp(Function):
    def forward(self, a, axis: int = -1, keepdims: bool = False):
        self.axis, self.keepdims = axis, keepdims
        self.out = special.logsumexp(a, axis=axis, keepdims=True)
        return self.out if keepdims else np.squeeze(self.out, axis=axis)

    def backward(self, grad):
        a = self.inputs[0].data
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (grad * np.exp(a - self.out),)


class LogSoftmax(Function):
    def forward(self, a, axis: int = -1):
        self.axis = axis
        self.out = a - special.logsumexp(a, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        softmax = np.exp(self.out)
        return (grad - softmax * grad.sum(axis=self.axis, keepdims=True),)


# ---------------------------------------------------------------------- shape

class Reshape(Function):
    def forward(self, a, shape=None):
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.inputs[0].shape),)


class BroadcastTo(Function):
    def forward(self, a, shape=None):
        return np.broadcast_to(a, shape).copy()

    def backward(self, grad):
        return (unbroadcast(grad, self.inputs[0].shape),)


class Concat(Function):
    def forward(self, *arrays, axis: int = 1):
        self.axis = axis
        self.sizes = [arr.shape[axis] for arr in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


class Slice(Function):
    def forward(self, a, axis: int = 1, start: int = 0, stop: int | None = None):
        self.index = [slice(None)] * a.ndim
        self.index[axis] = slice(start, stop)
        self.index = tuple(self.index)
        return a[self.index]

    def backward(self, grad):
        full = np.zeros(self.inputs[0].shape, dtype=grad.dtype)
        full[self.index] = grad
        return (full,)


# ---------------------------------------------------------------- layer maths

class Linear(Function):
    def forward(self, x, weight, bias):
        if x.shape[-1] != weight.shape[1]:
            raise ShapeError(f"linear: input features {x.shape[-1]} != weight in-features {weight.shape[1]}")
        return x @ weight.T + bias

    def backward(self, grad):
        x, weight, _ = self.inputs
        return grad @ weight.data, grad.T @ x.data, grad.sum(axis=0)


class Conv2d(Function):
    """Grouped 2-D cross-correlation on NCHW input, weight (O, C/groups, k, k)."""

    def forward(self, x, weight, bias, stride: int = 1, padding: int = 0, groups: int = 1):
        n, c, h, w = x.shape
        out_c, c_per_group, k, k2 = weight.shape
        if k != k2:
            raise ShapeError(f"conv2d: kernel must be square, got {k}x{k2}")
        if c % groups or out_c % groups:
            raise ShapeError(f"conv2d: channels {c}->{out_c} not divisible by groups={groups}")
        if c // groups != c_per_group:
            raise ShapeError(f"conv2d: weight expects {c_per_group * groups} input channels, got {c}")
        if bias.shape != (out_c,):
            raise ShapeError(f"conv2d: bias shape {bias.shape} != ({out_c},)")
        if h + 2 * padding < k or w + 2 * padding < k:
            raise ShapeError(f"conv2d: kernel {k} larger than padded input {h}x{w}")
        self.stride, self.padding, self.groups = stride, padding, groups
        padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        self.padded_shape = padded.shape
        windows = sliding_window_view(padded, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
        ho, wo = windows.shape[2], windows.shape[3]
        self.windows = windows.reshape(n, groups, c_per_group, ho, wo, k, k)
        self.grouped_weight = weight.reshape(groups, out_c // groups, c_per_group, k, k)
        out = np.einsum("ngchwij,gocij->ngohw", self.windows, self.grouped_weight, optimize=True)
        return out.reshape(n, out_c, ho, wo) + bias[None, :, None, None]

    def backward(self, grad):
        x, weight, _ = self.inputs
        n, c, h, w = x.shape
        out_c, c_per_group, k, _ = weight.shape
        g, s, p = self.groups, self.stride, self.padding
        ho, wo = grad.shape[2], grad.shape[3]
        grouped_grad = grad.reshape(n, g, out_c // g, ho, wo)

        grad_bias = grad.sum(axis=(0, 2, 3))
        grad_weight = np.einsum("ngohw,ngchwij->gocij", grouped_grad, self.windows, optimize=True)
        grad_weight = grad_weight.reshape(out_c, c_per_group, k, k)

        grad_windows = np.einsum("ngohw,gocij->ngchwij", grouped_grad, self.grouped_weight, optimize=True)
        grad_windows = grad_windows.reshape(n, c, ho, wo, k, k)
        grad_padded = np.zeros(self.padded_shape, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                grad_padded[:, :, i:i + s * ho:s, j:j + s * wo:s] += grad_windows[:, :, :, :, i, j]
        grad_input = grad_padded[:, :, p:p + h, p:p + w]
        return grad_input, grad_weight, grad_bias


def _exact_window_mean(x: np.ndarray, factor: int) -> np.ndarray:
    # Accumulate in a wider type so that averaging factor**2 equal values is exact.
    wide = np.float64 if x.dtype == np.float32 else np.longdouble
    n, c, h, w = x.shape
    blocks = x.astype(wide).reshape(n, c, h // factor, factor, w // factor, factor)
    return (blocks.sum(axis=(3, 5)) / (factor * factor)).astype(x.dtype)


class AvgPool(Function):
    def forward(self, x, factor: int = 2):
        if x.shape[2] % factor or x.shape[3] % factor:
            raise ShapeError(f"avg_pool: spatial size {x.shape[2:]} not divisible by {factor}")
        self.factor = factor
        return _exact_window_mean(x, factor)

    def backward(self, grad):
        f = self.factor
        return (np.repeat(np.repeat(grad, f, axis=2), f, axis=3) / (f * f),)


class NNUpsample(Function):
    def forward(self, x, factor: int = 2):
        if factor < 1:
            raise ShapeError(f"nn_upsample: factor must be >= 1, got {factor}")
        self.factor = factor
        return np.repeat(np.repeat(x, factor, axis=2), factor, axis=3)

    def backward(self, grad):
        f = self.factor
        n, c, h, w = grad.shape
        return (grad.reshape(n, c, h // f, f, w // f, f).sum(axis=(3, 5)),)


# ------------------------------------------------------------ functional API

def add(a, b) -> Tensor:
    return Add.apply(a, b)


def sub(a, b) -> Tensor:
    return Sub.apply(a, b)


def mul(a, b) -> Tensor:
    return Mul.apply(a, b)


def div(a, b) -> Tensor:
    return Div.apply(a, b)


def neg(a) -> Tensor:
    return Neg.apply(a)


def scale(a, factor: float) -> Tensor:
    return Scale.apply(a, factor=float(factor))


def square(a) -> Tensor:
    return Square.apply(a)


def exp(a) -> Tensor:
    return Exp.apply(a)


def log(a) -> Tensor:
    return Log.apply(a)


def tanh(a) -> Tensor:
    return Tanh.apply(a)


def sigmoid(a) -> Tensor:
    return Sigmoid.apply(a)


def softplus(a) -> Tensor:
    return Softplus.apply(a)


def gelu(a) -> Tensor:
    return Gelu.apply(a)


def clamp_min(a, low: float) -> Tensor:
    return ClampMin.apply(a, low=low)


def where(condition: np.ndarray, a, b) -> Tensor:
    return Where.apply(a, b, condition=condition)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    return LogSumExp.apply(a, axis=axis, keepdims=keepdims)


def log_softmax(a, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(a, axis=axis)


def reshape(a, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def broadcast(a, shape: Sequence[int]) -> Tensor:
    return BroadcastTo.apply(a, shape=tuple(shape))


def concat_channels(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def slice_channels(a, start: int, stop: int, axis: int = 1) -> Tensor:
    a = as_tensor(a)
    if not 0 <= start < stop <= a.shape[axis]:
        raise ShapeError(f"slice_channels: [{start}:{stop}] out of range for {a.shape[axis]} channels")
    return Slice.apply(a, axis=axis, start=start, stop=stop)


def linear(x, weight, bias) -> Tensor:
    return Linear.apply(x, weight, bias)


def conv2d(x, weight, bias, stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding, groups=groups)


def avg_pool(x, factor: int) -> Tensor:
    return AvgPool.apply(x, factor=factor)


def nn_upsample(x, factor: int) -> Tensor:
    return NNUpsample.apply(x, factor=factor)


def detach(a) -> Tensor:
    """Value-identical tensor through which no gradient flows."""
    a = as_tensor(a)
    return Tensor._wrap(a.data, None, False)


def global_grad_norm(params: Sequence[Tensor]) -> float:
    """L2 norm of all parameter gradients taken together; NaN propagates."""
    total = 0.0
    for i, p in enumerate(params):
        if p.grad is None:
            raise MissingGradientError(f"parameter #{i} with shape {p.shape} has no gradient")
        g = p.grad.astype(np.float64, copy=False)
        total += float(np.sum(g * g))
    return math.sqrt(total) if total == total else float("nan")


# ------------------------------------------------------- operator overloading

def _bind_operators() -> None:
    Tensor.__add__ = lambda self, other: add(self, other)
    Tensor.__radd__ = lambda self, other: add(other, self)
    Tensor.__sub__ = lambda self, other: sub(self, other)
    Tensor.__rsub__ = lambda self, other: sub(other, self)
    Tensor.__mul__ = lambda self, other: mul(self, other)
    Tensor.__rmul__ = lambda self, other: mul(other, self)
    Tensor.__truediv__ = lambda self, other: div(self, other)
    Tensor.__rtruediv__ = lambda self, other: div(other, self)
    Tensor.__neg__ = lambda self: neg(self)
    Tensor.sum = lambda self, axis=None, keepdims=False: sum(self, axis, keepdims)
    Tensor.mean = lambda self, axis=None, keepdims=False: mean(self, axis, keepdims)
    Tensor.exp = lambda self: exp(self)
    Tensor.log = lambda self: log(self)
    Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 else shape)


_bind_operators()
