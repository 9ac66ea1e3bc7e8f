"""Rate profiles, reconstructions, sampling and ablations."""
from .rates import COLLAPSE_THRESHOLD_BPD, RateProfile, kl_per_layer, plot_rate_profile
from .reconstruct import DEFAULT_PRIOR_TEMPERATURE, latent_fractions, partial_reconstruct, reconstruct, sample
from .ablation import (
    AblationCell,
    AblationResult,
    depth_ablation,
    layer_distribution_ablation,
    residual_scaling_ablation,
    with_decoder_depth,
)

__all__ = [
    "COLLAPSE_THRESHOLD_BPD",
    "RateProfile",
    "kl_per_layer",
    "plot_rate_profile",
    "DEFAULT_PRIOR_TEMPERATURE",
    "latent_fractions",
    "partial_reconstruct",
    "reconstruct",
    "sample",
    "AblationCell",
    "AblationResult",
    "depth_ablation",
    "layer_distribution_ablation",
    "residual_scaling_ablation",
    "with_decoder_depth",
]
