"""Network topology, parameters and the very deep VAE itself."""
from .blockspec import BlockSpec, parse_block_spec
from .config import DownsampleMode, ModelConfig, PriorMode
from .layers import Bottleneck, Conv2d, FeedForward
from .params import Parameters
from .vae import (
    DecodeMode,
    Encoder,
    ExecutionPlan,
    LayerRecord,
    TopDownBlock,
    TopDownState,
    VeryDeepVAE,
    apply_residual_scaling,
    group_independent,
)

__all__ = [
    "BlockSpec",
    "parse_block_spec",
    "DownsampleMode",
    "ModelConfig",
    "PriorMode",
    "Bottleneck",
    "Conv2d",
    "FeedForward",
    "Parameters",
    "DecodeMode",
    "Encoder",
    "ExecutionPlan",
    "LayerRecord",
    "TopDownBlock",
    "TopDownState",
    "VeryDeepVAE",
    "apply_residual_scaling",
    "group_independent",
]
