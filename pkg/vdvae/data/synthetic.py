"""Procedural images with a global, a mid-scale and a local source of variation."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .dataset import Dataset

logger = logging.getLogger(__name__)


@dataclass
class SyntheticConfig:
    """Configuration for synthetic image generation."""
    n: int = 1000  # training images
    size: int = 8
    palette_k: int = 4  # colors to draw backgrounds and rectangles from
    texture_scale: int = 8  # +- integer pixel noise
    seed: int = 0
    n_val: int = 200
    n_test: int = 0
    channels: int = 3

    def validate(self) -> SyntheticConfig:
        if self.size not in (8, 16, 32):
            raise ConfigError(f"synthetic size must be 8, 16 or 32, got {self.size}")
        if self.palette_k < 1 or self.texture_scale < 0 or self.n < 1 or self.n_val < 0 or self.n_test < 0:
            raise ConfigError("palette_k and n must be >= 1; texture_scale, n_val and n_test >= 0")
        if self.channels not in (1, 3):
            raise ConfigError(f"channels must be 1 or 3, got {self.channels}")
        return self


def make_palette(k: int, channels: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 256, size=(k, channels)).astype(np.int64)


def _rectangle(size: int, rng: np.random.Generator) -> tuple[int, int, int, int]:
    """(top, left, height, width) with sides between a quarter and half the image."""
    lo, hi = max(1, size // 4), max(1, size // 2)
    h = int(rng.integers(lo, hi + 1))
    w = int(rng.integers(lo, hi + 1))
    top = int(rng.integers(0, size - h + 1))
    left = int(rng.integers(0, size - w + 1))
    return top, left, h, w


def generate_images(config: SyntheticConfig, count: int, palette: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    size, k = config.size, config.palette_k
    images = np.empty((count, size, size, config.channels), dtype=np.uint8)
    for i in range(count):
        bg = int(rng.integers(0, k))
        fg = bg if k == 1 else int((bg + rng.integers(1, k)) % k)
        canvas = np.broadcast_to(palette[bg], (size, size, config.channels)).copy()
        top, left, h, w = _rectangle(size, rng)
        canvas[top:top + h, left:left + w] = palette[fg]
        if config.texture_scale:
            canvas += rng.integers(-config.texture_scale, config.texture_scale + 1, size=canvas.shape)
        images[i] = np.clip(canvas, 0, 255)
    return images


def pixel_marginal(config: SyntheticConfig, palette: np.ndarray, channel: int = 0) -> np.ndarray:
    """Exact distribution over 0..255 of any single pixel value in one channel.

    Background and rectangle colors are both uniform over the palette, so every
    pixel shows each color with probability 1 / palette_k before the uniform
    integer texture noise and clipping.
    """
    offsets = np.arange(-config.texture_scale, config.texture_scale + 1)
    probs = np.zeros(256, dtype=np.float64)
    for color in np.asarray(palette)[:config.palette_k, channel]:
        np.add.at(probs, np.clip(color + offsets, 0, 255), 1.0 / (len(offsets) * config.palette_k))
    return probs


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Fully determined by config.seed."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    palette = make_palette(config.palette_k, config.channels, rng)
    images = generate_images(config, config.n + config.n_val + config.n_test, palette, rng)
    train = images[:config.n]
    val = images[config.n:config.n + config.n_val]
    test = images[config.n + config.n_val:] if config.n_test else None
    logger.debug("Generated %d synthetic %dx%d images (palette %d, texture %d)",
                 len(images), config.size, config.size, config.palette_k, config.texture_scale)
    return Dataset(train=train, val=val, test=test,
                   provenance=f"synthetic(size={config.size},k={config.palette_k},"
                              f"texture={config.texture_scale},seed={config.seed})")
