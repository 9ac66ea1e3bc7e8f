"""Adam / AdamW, EMA shadow weights and gradient-norm skipping."""
from __future__ import annotations

import logging
import math
from enum import Enum

import numpy as np

from ..errors import MissingGradientError
from .config import TrainConfig
from .state import TrainState

logger = logging.getLogger(__name__)


class UpdateOutcome(Enum):
    APPLIED = "applied"
    SKIPPED = "skipped"


def adam_step(state: TrainState, grads: dict[str, np.ndarray], config: TrainConfig | None = None) -> None:
    """One bias-corrected Adam update; weight decay is decoupled (AdamW) when > 0."""
    config = config or state.train_config
    t = state.applied_count + 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    lr, wd = config.learning_rate, config.weight_decay
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t
    for name, param in state.params.items():
        grad = grads.get(name)
        if grad is None:
            raise MissingGradientError(f"no gradient for {name}")
        dtype = param.dtype
        m = state.adam_m[name] = (b1 * state.adam_m[name] + (1.0 - b1) * grad).astype(dtype)
        v = state.adam_v[name] = (b2 * state.adam_v[name] + (1.0 - b2) * grad * grad).astype(dtype)
        update = (m / correction1) / (np.sqrt(v / correction2) + config.adam_eps)
        data = param.data
        if wd > 0:
            data = data * (1.0 - lr * wd)
        param.data = (data - lr * update).astype(dtype)
    state.applied_count = t


def ema_update(state: TrainState, rate: float | None = None) -> None:
    """shadow <- rate * shadow + (1 - rate) * param."""
    rate = state.train_config.ema_rate if rate is None else rate
    for name, param in state.params.items():
        shadow = state.ema[name]
        shadow.data = (rate * shadow.data + (1.0 - rate) * param.data).astype(shadow.dtype)


def should_skip(grad_norm: float, threshold: float) -> bool:
    """Strictly above the threshold, or NaN."""
    return math.isnan(grad_norm) or grad_norm > threshold


def maybe_skip_update(state: TrainState, grads: dict[str, np.ndarray], grad_norm: float,
                      threshold: float | None = None) -> UpdateOutcome:
    """Skip the whole update (params, moments, EMA) when the gradient norm is too large."""
    threshold = state.train_config.skip_threshold if threshold is None else threshold
    if should_skip(grad_norm, threshold):
        state.skip_count += 1
        state.skipped_steps.append((state.step, grad_norm))
        logger.warning("Skipping update at step %d: grad norm %.4g > threshold %.4g",
                       state.step, grad_norm, threshold)
        return UpdateOutcome.SKIPPED
    adam_step(state, grads)
    ema_update(state)
    return UpdateOutcome.APPLIED
