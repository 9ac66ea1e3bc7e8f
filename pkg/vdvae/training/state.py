"""Everything needed to continue a training run."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from ..model import ModelConfig, Parameters
from .config import TrainConfig
from .normalization import NormStats


@dataclass
class TrainState:
    """Parameters, Adam moments, EMA shadow, normalization stats and counters.

    step counts every batch seen; applied_count counts updates that were not skipped.
    """
    params: Parameters
    ema: Parameters
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    stats: NormStats
    model_config: ModelConfig
    train_config: TrainConfig
    step: int = 0
    applied_count: int = 0
    skip_count: int = 0
    skipped_steps: list[tuple[int, float]] = field(default_factory=list)

    @classmethod
    def initialize(cls, params: Parameters, stats: NormStats, model_config: ModelConfig,
                   train_config: TrainConfig) -> TrainState:
        """Fresh state: zero moments and an EMA equal to the parameters."""
        return cls(
            params=params,
            ema=params.copy(requires_grad=False),
            adam_m={name: np.zeros_like(t.data) for name, t in params.items()},
            adam_v={name: np.zeros_like(t.data) for name, t in params.items()},
            stats=stats,
            model_config=model_config,
            train_config=train_config,
        )

    @property
    def skip_fraction(self) -> float:
        return self.skip_count / self.step if self.step else 0.0

    def check_consistent(self) -> TrainState:
        names = set(self.params.names())
        for label, other in (("ema", set(self.ema.names())), ("adam_m", set(self.adam_m)),
                             ("adam_v", set(self.adam_v))):
            if other != names:
                raise ShapeError(f"{label} keys do not match parameter keys")
        return self

    def counters(self) -> dict:
        return {
            "step": self.step,
            "applied_count": self.applied_count,
            "skip_count": self.skip_count,
        }
