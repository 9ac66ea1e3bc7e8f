"""Model configuration dataclasses."""
from __future__ import annotations

import json
from dataclasses import dataclass, fields
from enum import Enum

from ..errors import ConfigError
from .blockspec import BlockSpec, parse_block_spec


class PriorMode(Enum):
    SEPARATE = "separate"
    SHARED_PSEUDOINPUT = "shared_pseudoinput"


class DownsampleMode(Enum):
    POOL = "pool"
    CONV = "conv"


@dataclass
class ModelConfig:
    """Network topology and initialization switches."""
    width: int = 384
    bottleneck_ratio: float = 0.25
    zdim: int = 16
    enc_blocks: str = "32x10,16x10,8x10,4x10,1x10"
    dec_blocks: str = "1x1,4x2,8x5,16x10,32x11"
    image_size: int = 32
    image_channels: int = 3
    prior_mode: PriorMode = PriorMode.SEPARATE
    ff_group_size: int = 4  # channels per group in the feedforward convs
    dmol_mixtures: int = 10
    residual_scaling: bool = True
    downsample_mode: DownsampleMode = DownsampleMode.POOL
    topdown_residual: bool = True
    independent_group_size: int = 1  # K consecutive top-down blocks share their input

    def __post_init__(self):
        if isinstance(self.prior_mode, str):
            self.prior_mode = PriorMode(self.prior_mode)
        if isinstance(self.downsample_mode, str):
            self.downsample_mode = DownsampleMode(self.downsample_mode)
        for f in fields(self):
            if f.type == "float":
                setattr(self, f.name, float(getattr(self, f.name)))

    @property
    def enc_spec(self) -> BlockSpec:
        return parse_block_spec(self.enc_blocks)

    @property
    def dec_spec(self) -> BlockSpec:
        return parse_block_spec(self.dec_blocks)

    @property
    def bottleneck_width(self) -> int:
        return max(1, int(self.width * self.bottleneck_ratio))

    @property
    def stochastic_depth(self) -> int:
        return self.dec_spec.total_blocks

    def validate(self) -> ModelConfig:
        enc, dec = self.enc_spec, self.dec_spec
        if enc.increasing and len(enc) > 1:
            raise ConfigError(f"Encoder spec must go from fine to coarse: {self.enc_blocks}")
        if not dec.increasing:
            raise ConfigError(f"Decoder spec must go from coarse to fine: {self.dec_blocks}")
        if enc.resolutions[0] != self.image_size:
            raise ConfigError(f"Encoder starts at {enc.resolutions[0]}, image_size is {self.image_size}")
        if dec.resolutions[-1] != self.image_size:
            raise ConfigError(f"Decoder ends at {dec.resolutions[-1]}, image_size is {self.image_size}")
        missing = [r for r in dec.resolutions if r not in enc.resolutions]
        if missing:
            raise ConfigError(f"Decoder resolutions {missing} have no encoder activations")
        if self.width % 4 or self.width % self.ff_group_size:
            raise ConfigError(f"width {self.width} must be divisible by 4 and by ff_group_size {self.ff_group_size}")
        if self.image_channels not in (1, 3):
            raise ConfigError(f"image_channels must be 1 or 3, got {self.image_channels}")
        if self.dmol_mixtures < 1 or self.zdim < 1:
            raise ConfigError("dmol_mixtures and zdim must be >= 1")
        if self.independent_group_size < 1:
            raise ConfigError("independent_group_size must be >= 1")
        return self

    # Benchmark-scale presets.

    @classmethod
    def cifar10(cls) -> ModelConfig:
        return cls(width=384, zdim=16, enc_blocks="32x10,16x10,8x10,4x10,1x10",
                   dec_blocks="1x1,4x2,8x5,16x10,32x11")

    @classmethod
    def imagenet32(cls) -> ModelConfig:
        return cls(width=768, zdim=64, enc_blocks="32x7,16x7,8x7,4x7,1x7",
                   dec_blocks="1x3,4x3,8x2,16x10,32x8")

    @classmethod
    def imagenet64(cls) -> ModelConfig:
        return cls(width=1024, zdim=64, image_size=64,
                   enc_blocks="64x6,32x6,16x6,8x6,4x6,1x6",
                   dec_blocks="1x5,4x5,8x5,16x5,32x5,64x3")

    @classmethod
    def depth_ablation(cls) -> ModelConfig:
        """Settings shared by every cell of the depth / layer-distribution grid."""
        return cls(width=384, zdim=16, enc_blocks="32x7,16x7,8x7,4x7,1x7",
                   dec_blocks="1x6,4x6,8x6,16x6,32x6")

    @classmethod
    def toy(cls, depth: int = 8) -> ModelConfig:
        """Desk-scale model on 8x8 synthetic images."""
        return cls(width=16, zdim=4, enc_blocks="8x2,4x2,1x1", dec_blocks=f"1x1,4x1,8x{max(1, depth - 2)}",
                   image_size=8, image_channels=3, dmol_mixtures=3)

    def to_dict(self) -> dict:
        data = {}
        for f in fields(self):
            value = getattr(self, f.name)
            data[f.name] = value.value if isinstance(value, Enum) else value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown model config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, json_str: str) -> ModelConfig:
        return cls.from_dict(json.loads(json_str))
