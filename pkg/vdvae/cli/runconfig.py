"""Run-config files: one `key = value` per line, `#` comments, validated by pydantic."""
from __future__ import annotations

from dataclasses import asdict, replace
from enum import Enum
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, ValidationError

from ..data import SyntheticConfig
from ..errors import ConfigError
from ..model import ModelConfig
from ..training import TrainConfig

_MODEL_DEFAULTS = ModelConfig()
_TRAIN_DEFAULTS = TrainConfig()
_SYNTH_DEFAULTS = SyntheticConfig()


class RunConfig(BaseModel):
    """Every accepted key with its default; unknown keys are rejected."""
    model_config = ConfigDict(extra="forbid")

    # model
    width: int = _MODEL_DEFAULTS.width
    bottleneck_ratio: float = _MODEL_DEFAULTS.bottleneck_ratio
    zdim: int = _MODEL_DEFAULTS.zdim
    enc_blocks: str = _MODEL_DEFAULTS.enc_blocks
    dec_blocks: str = _MODEL_DEFAULTS.dec_blocks
    image_size: int = _MODEL_DEFAULTS.image_size
    image_channels: int = _MODEL_DEFAULTS.image_channels
    prior_mode: Literal["separate", "shared_pseudoinput"] = "separate"
    ff_group_size: int = _MODEL_DEFAULTS.ff_group_size
    dmol_mixtures: int = _MODEL_DEFAULTS.dmol_mixtures
    residual_scaling: bool = _MODEL_DEFAULTS.residual_scaling
    downsample_mode: Literal["pool", "conv"] = "pool"
    topdown_residual: bool = _MODEL_DEFAULTS.topdown_residual
    independent_group_size: int = _MODEL_DEFAULTS.independent_group_size

    # training
    lr: float = _TRAIN_DEFAULTS.learning_rate
    batch_size: int = _TRAIN_DEFAULTS.batch_size
    weight_decay: float = _TRAIN_DEFAULTS.weight_decay
    skip_threshold: float = _TRAIN_DEFAULTS.skip_threshold
    ema_rate: float = _TRAIN_DEFAULTS.ema_rate
    kl_phase: Literal["standard_prior_phase", "true_kl_phase"] = "true_kl_phase"
    total_steps: int = _TRAIN_DEFAULTS.total_steps
    seed: int = _TRAIN_DEFAULTS.seed
    log_every: int = _TRAIN_DEFAULTS.log_every
    checkpoint_every: int = _TRAIN_DEFAULTS.checkpoint_every
    eval_batch_size: int = _TRAIN_DEFAULTS.eval_batch_size

    # data
    dataset: Literal["cifar10", "raw", "synthetic"] = "cifar10"
    data_path: Optional[str] = None
    synthetic_n: int = _SYNTH_DEFAULTS.n
    synthetic_val: int = _SYNTH_DEFAULTS.n_val
    palette_k: int = _SYNTH_DEFAULTS.palette_k
    texture_scale: int = _SYNTH_DEFAULTS.texture_scale

    def to_model_config(self) -> ModelConfig:
        return ModelConfig(
            width=self.width, bottleneck_ratio=self.bottleneck_ratio, zdim=self.zdim,
            enc_blocks=self.enc_blocks, dec_blocks=self.dec_blocks, image_size=self.image_size,
            image_channels=self.image_channels, prior_mode=self.prior_mode, ff_group_size=self.ff_group_size,
            dmol_mixtures=self.dmol_mixtures, residual_scaling=self.residual_scaling,
            downsample_mode=self.downsample_mode, topdown_residual=self.topdown_residual,
            independent_group_size=self.independent_group_size,
        ).validate()

    def to_train_config(self, base: TrainConfig | None = None) -> TrainConfig:
        """Keys without a run-config counterpart (the Adam constants) come from ``base``."""
        return replace(
            base or TrainConfig(),
            learning_rate=self.lr, batch_size=self.batch_size, weight_decay=self.weight_decay,
            skip_threshold=self.skip_threshold, ema_rate=self.ema_rate, kl_phase=self.kl_phase,
            total_steps=self.total_steps, seed=self.seed, log_every=self.log_every,
            checkpoint_every=self.checkpoint_every, eval_batch_size=self.eval_batch_size,
        ).validate()

    def to_synthetic_config(self) -> SyntheticConfig:
        return SyntheticConfig(n=self.synthetic_n, size=self.image_size, palette_k=self.palette_k,
                               texture_scale=self.texture_scale, seed=self.seed, n_val=self.synthetic_val,
                               channels=self.image_channels)


def checkpoint_values(model_config: ModelConfig, train_config: TrainConfig) -> dict[str, Any]:
    """Run-config keys recovered from the configs a checkpoint was written with."""
    values = {**asdict(model_config), **asdict(train_config)}
    values["lr"] = values.pop("learning_rate")
    return {key: value.value if isinstance(value, Enum) else value
            for key, value in values.items() if key in RunConfig.model_fields}


def parse_lines(text: str, source: str = "<config>") -> tuple[dict[str, str], dict[str, int]]:
    """(raw values, line number of each key)."""
    values, lines = {}, {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{line_no}: missing key")
        if key in values:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r} (first set on line {lines[key]})")
        values[key], lines[key] = value, line_no
    return values, lines


def build_run_config(values: dict[str, Any], lines: dict[str, int] | None = None,
                     source: str = "<config>") -> RunConfig:
    lines = lines or {}

    def where(key: str) -> str:
        return f"{source}:{lines[key]}" if key in lines else source

    unknown = [k for k in values if k not in RunConfig.model_fields]
    if unknown:
        raise ConfigError(f"{where(unknown[0])}: unknown key {unknown[0]!r}")
    try:
        return RunConfig(**values)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = str(first["loc"][0]) if first["loc"] else "?"
        raise ConfigError(f"{where(key)}: invalid value for {key!r}: {first['msg']}") from exc


def apply_overrides(values: dict[str, Any], lines: dict[str, int], overrides: list[str]) -> None:
    """Apply `key=value` overrides in place; they carry no line number."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        values[key] = value
        lines.pop(key, None)


def load_run_config(path: str | Path | None = None, overrides: list[str] | None = None,
                    base: dict[str, Any] | None = None) -> RunConfig:
    """Defaults, then ``base``, then the file, then the overrides; later sources win."""
    values: dict[str, Any] = dict(base or {})
    lines: dict[str, int] = {}
    source = "<overrides>"
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        source = str(path)
        file_values, lines = parse_lines(path.read_text(encoding="utf-8"), source)
        values.update(file_values)
    apply_overrides(values, lines, overrides or [])
    return build_run_config(values, lines, source)
