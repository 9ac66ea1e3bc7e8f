"""Minimal reverse-mode automatic differentiation engine."""
from .tensor import (
    ComputationTape,
    Function,
    Tensor,
    as_tensor,
    detect_anomaly,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
    precision,
    set_default_dtype,
)
from .ops import (
    add,
    avg_pool,
    broadcast,
    clamp_min,
    concat_channels,
    conv2d,
    detach,
    div,
    exp,
    gelu,
    global_grad_norm,
    linear,
    log,
    log_softmax,
    logsumexp,
    mean,
    mul,
    neg,
    nn_upsample,
    reshape,
    scale,
    sigmoid,
    slice_channels,
    softplus,
    square,
    sub,
    sum,
    tanh,
    where,
)
from .gradcheck import GradCheckResult, gradcheck, numerical_gradient, run_gradcheck_suite

__all__ = [
    "ComputationTape",
    "Function",
    "Tensor",
    "as_tensor",
    "detect_anomaly",
    "get_default_dtype",
    "is_grad_enabled",
    "no_grad",
    "precision",
    "set_default_dtype",
    "add",
    "avg_pool",
    "broadcast",
    "clamp_min",
    "concat_channels",
    "conv2d",
    "detach",
    "div",
    "exp",
    "gelu",
    "global_grad_norm",
    "linear",
    "log",
    "log_softmax",
    "logsumexp",
    "mean",
    "mul",
    "neg",
    "nn_upsample",
    "reshape",
    "scale",
    "sigmoid",
    "slice_channels",
    "softplus",
    "square",
    "sub",
    "sum",
    "tanh",
    "where",
    "GradCheckResult",
    "gradcheck",
    "numerical_gradient",
    "run_gradcheck_suite",
]
