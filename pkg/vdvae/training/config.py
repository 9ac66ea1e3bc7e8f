"""Training configuration dataclasses."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from enum import Enum

from ..errors import ConfigError


class KLPhase(Enum):
    STANDARD_PRIOR = "standard_prior_phase"
    TRUE_KL = "true_kl_phase"


@dataclass
class TrainConfig:
    """Optimizer, skipping, EMA and loop settings."""
    learning_rate: float = 2e-4
    batch_size: int = 32
    weight_decay: float = 0.0
    skip_threshold: float = 400.0
    ema_rate: float = 0.999  # shadow <- rate * shadow + (1 - rate) * param
    kl_phase: KLPhase = KLPhase.TRUE_KL
    total_steps: int = 1000
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    log_every: int = 100
    checkpoint_every: int = 0  # 0 = final checkpoint only
    eval_batch_size: int = 64

    def __post_init__(self):
        if isinstance(self.kl_phase, str):
            self.kl_phase = KLPhase(self.kl_phase)
        for f in fields(self):
            if f.type == "float":
                setattr(self, f.name, float(getattr(self, f.name)))

    def validate(self) -> TrainConfig:
        if not self.skip_threshold > 0:
            raise ConfigError(f"skip_threshold must be > 0, got {self.skip_threshold}")
        if not 0.0 <= self.ema_rate < 1.0:
            raise ConfigError(f"ema_rate must be in [0, 1), got {self.ema_rate}")
        if self.learning_rate <= 0 or not math.isfinite(self.learning_rate):
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.total_steps < 0 or self.checkpoint_every < 0 or self.log_every < 1:
            raise ConfigError("total_steps and checkpoint_every must be >= 0, log_every >= 1")
        return self

    # Per-dataset optimizer settings.

    @classmethod
    def cifar10(cls) -> TrainConfig:
        return cls(learning_rate=2e-4, batch_size=32, weight_decay=0.01, skip_threshold=400.0)

    @classmethod
    def imagenet32(cls) -> TrainConfig:
        return cls(learning_rate=1.5e-4, batch_size=256, skip_threshold=300.0)

    @classmethod
    def imagenet64(cls) -> TrainConfig:
        return cls(learning_rate=1.5e-4, batch_size=128, skip_threshold=380.0)

    @classmethod
    def ffhq256(cls) -> TrainConfig:
        return cls(learning_rate=1.5e-4, batch_size=32, skip_threshold=180.0)

    @classmethod
    def ffhq1024(cls) -> TrainConfig:
        return cls(learning_rate=7e-5, batch_size=32, skip_threshold=500.0)

    @classmethod
    def toy(cls, total_steps: int = 500) -> TrainConfig:
        return cls(learning_rate=2e-3, batch_size=16, skip_threshold=400.0, total_steps=total_steps,
                   log_every=50, eval_batch_size=100)

    @classmethod
    def for_dataset(cls, name: str) -> TrainConfig:
        presets = {
            "cifar10": cls.cifar10,
            "imagenet32": cls.imagenet32,
            "imagenet64": cls.imagenet64,
            "ffhq256": cls.ffhq256,
            "ffhq1024": cls.ffhq1024,
        }
        return presets.get(name, cls)()

    def to_dict(self) -> dict:
        data = {}
        for f in fields(self):
            value = getattr(self, f.name)
            data[f.name] = value.value if isinstance(value, Enum) else value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown train config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, json_str: str) -> TrainConfig:
        return cls.from_dict(json.loads(json_str))
