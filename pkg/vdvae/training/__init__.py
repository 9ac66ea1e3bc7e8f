"""Optimization: configs, state, objectives, metrics and the training loop."""
from .config import KLPhase, TrainConfig
from .normalization import NormStats, compute_stats, float32_stats, normalize_input
from .state import TrainState
from .optim import UpdateOutcome, adam_step, ema_update, maybe_skip_update, should_skip
from .losses import kl_phase_loss, training_loss
from .metrics import MetricsLog, StepRecord
from .trainer import EvalResult, Trainer, evaluate, model_inputs, train

__all__ = [
    "KLPhase",
    "TrainConfig",
    "NormStats",
    "compute_stats",
    "float32_stats",
    "normalize_input",
    "TrainState",
    "UpdateOutcome",
    "adam_step",
    "ema_update",
    "maybe_skip_update",
    "should_skip",
    "kl_phase_loss",
    "training_loss",
    "MetricsLog",
    "StepRecord",
    "EvalResult",
    "Trainer",
    "evaluate",
    "model_inputs",
    "train",
]
