"""Datasets, checkpoints and image export."""
from .dataset import Dataset, validation_split
from .synthetic import SyntheticConfig, generate_synthetic, make_palette, pixel_marginal
from .cifar10 import load_cifar10_binary, read_batch
from .rawtensor import read_raw_tensor, write_raw_tensor
from .images import chw_to_hwc, read_ppm, tile_grid, write_png_grid, write_ppm, write_ppm_grid
from .checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .loader import load_dataset, load_raw_dataset

__all__ = [
    "Dataset",
    "validation_split",
    "SyntheticConfig",
    "generate_synthetic",
    "make_palette",
    "pixel_marginal",
    "load_cifar10_binary",
    "read_batch",
    "read_raw_tensor",
    "write_raw_tensor",
    "chw_to_hwc",
    "read_ppm",
    "tile_grid",
    "write_png_grid",
    "write_ppm",
    "write_ppm_grid",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "load_dataset",
    "load_raw_dataset",
]
