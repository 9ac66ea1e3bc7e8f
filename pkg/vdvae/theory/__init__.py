"""Executable checks of the autoregressive-equivalence and triangular-Jacobian properties."""
from .ar_equivalence import (
    DiscreteARModel,
    Prop1Report,
    prop1_equivalence_check,
    random_ar_model,
    vae_elbo,
    vae_marginal,
)
from .jacobian import (
    Prop2Report,
    finite_difference_jacobian,
    miniature_config,
    noise_to_latents,
    prop2_jacobian_check,
    randomize_parameters,
)

__all__ = [
    "DiscreteARModel",
    "Prop1Report",
    "prop1_equivalence_check",
    "random_ar_model",
    "vae_elbo",
    "vae_marginal",
    "Prop2Report",
    "finite_difference_jacobian",
    "miniature_config",
    "noise_to_latents",
    "prop2_jacobian_check",
    "randomize_parameters",
]
