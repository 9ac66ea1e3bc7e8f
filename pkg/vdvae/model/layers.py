"""Convolutional building blocks: plain conv, bottleneck block, grouped feedforward."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as F
from ..autodiff import Tensor
from .params import Parameters


@dataclass
class Conv2d:
    """k x k convolution whose weight and bias live in a Parameters store."""
    name: str
    c_in: int
    c_out: int
    kernel: int = 1
    stride: int = 1
    groups: int = 1
    zero_weight: bool = False

    @property
    def weight_name(self) -> str:
        return f"{self.name}.weight"

    @property
    def bias_name(self) -> str:
        return f"{self.name}.bias"

    @property
    def padding(self) -> int:
        return self.kernel // 2 if self.stride == 1 else 0

    def init(self, params: Parameters, rng: np.random.Generator) -> None:
        shape = (self.c_out, self.c_in // self.groups, self.kernel, self.kernel)
        if self.zero_weight:
            weight = np.zeros(shape)
        else:
            # fan-in scaled uniform
            bound = 1.0 / math.sqrt(shape[1] * self.kernel * self.kernel)
            weight = rng.uniform(-bound, bound, size=shape)
        params.register(self.weight_name, weight)
        params.register(self.bias_name, np.zeros(self.c_out))

    def __call__(self, params: Parameters, x: Tensor) -> Tensor:
        return F.conv2d(x, params[self.weight_name], params[self.bias_name],
                        stride=self.stride, padding=self.padding, groups=self.groups)


@dataclass
class Bottleneck:
    """c4(gelu(c3(gelu(c2(gelu(c1(gelu(x)))))))), optionally added back onto x.

    c1/c4 are 1x1 and c2/c3 are 3x3 (1x1 when use_3x3 is off, at 1x1 resolution).
    """
    name: str
    c_in: int
    c_mid: int
    c_out: int
    use_3x3: bool = True
    residual: bool = True
    zero_last: bool = False

    def __post_init__(self):
        k = 3 if self.use_3x3 else 1
        self.c1 = Conv2d(f"{self.name}.c1", self.c_in, self.c_mid)
        self.c2 = Conv2d(f"{self.name}.c2", self.c_mid, self.c_mid, kernel=k)
        self.c3 = Conv2d(f"{self.name}.c3", self.c_mid, self.c_mid, kernel=k)
        self.c4 = Conv2d(f"{self.name}.c4", self.c_mid, self.c_out, zero_weight=self.zero_last)

    @property
    def final_weight_name(self) -> str:
        return self.c4.weight_name

    def init(self, params: Parameters, rng: np.random.Generator) -> None:
        for conv in (self.c1, self.c2, self.c3, self.c4):
            conv.init(params, rng)

    def __call__(self, params: Parameters, x: Tensor) -> Tensor:
        h = self.c1(params, F.gelu(x))
        h = self.c2(params, F.gelu(h))
        h = self.c3(params, F.gelu(h))
        out = self.c4(params, F.gelu(h))
        return x + out if self.residual else out


@dataclass
class FeedForward:
    """Two grouped convolutions with a GELU between them."""
    name: str
    width: int
    group_size: int = 4
    use_3x3: bool = True
    residual: bool = False

    def __post_init__(self):
        k = 3 if self.use_3x3 else 1
        groups = self.width // self.group_size
        self.a = Conv2d(f"{self.name}.a", self.width, self.width, kernel=k, groups=groups)
        self.b = Conv2d(f"{self.name}.b", self.width, self.width, kernel=k, groups=groups)

    @property
    def final_weight_name(self) -> str:
        return self.b.weight_name

    def init(self, params: Parameters, rng: np.random.Generator) -> None:
        self.a.init(params, rng)
        self.b.init(params, rng)

    def __call__(self, params: Parameters, x: Tensor) -> Tensor:
        out = self.b(params, F.gelu(self.a(params, x)))
        return x + out if self.residual else out
