"""Reconstructions, partial-posterior reconstructions and temperature sampling."""
from __future__ import annotations

import numpy as np

from .. import autodiff as F
from ..data import chw_to_hwc
from ..dist import dmol_mean, dmol_sample
from ..errors import ConfigError
from ..model import BlockSpec, DecodeMode, Parameters, VeryDeepVAE
from ..training import NormStats, model_inputs

DEFAULT_PRIOR_TEMPERATURE = 0.4


def latent_fractions(dec_spec: BlockSpec, zdim: int) -> dict[int, float]:
    """Cumulative share of latent variables at resolutions <= r, for each decoder r."""
    per_res = {res: count * zdim * res * res for res, count in dec_spec.ladder}
    total = sum(per_res.values())
    out, running = {}, 0
    for res in sorted(per_res):
        running += per_res[res]
        out[res] = running / total
    return out


def _pixels(model: VeryDeepVAE, params: Parameters, xhat, rng: np.random.Generator, use_mean: bool) -> np.ndarray:
    dmol = model.output_params(params, xhat)
    return chw_to_hwc(dmol_mean(dmol) if use_mean else dmol_sample(dmol, rng))


def reconstruct(model: VeryDeepVAE, params: Parameters, images: np.ndarray, stats: NormStats,
                rng: np.random.Generator, use_mean: bool = False) -> np.ndarray:
    """Full posterior reconstruction of uint8 (n, H, W, C) images."""
    with F.no_grad():
        x_in, _ = model_inputs(images, stats, params.tensors()[0].dtype)
        activations = model.encode(params, x_in)
        xhat, _ = model.decode(params, activations, mode=DecodeMode.TRAIN, rng=rng)
        return _pixels(model, params, xhat, rng, use_mean)


def partial_reconstruct(model: VeryDeepVAE, params: Parameters, images: np.ndarray, stats: NormStats,
                        up_to: int, rng: np.random.Generator,
                        temperature: float = DEFAULT_PRIOR_TEMPERATURE, use_mean: bool = False) -> np.ndarray:
    """Posterior latents at resolutions <= up_to, prior latents at `temperature` above it."""
    if up_to != 0 and up_to not in model.dec_spec.resolutions:
        raise ConfigError(f"resolution {up_to} is not in decoder spec {model.dec_spec}")
    with F.no_grad():
        x_in, _ = model_inputs(images, stats, params.tensors()[0].dtype)
        activations = model.encode(params, x_in)
        xhat, _ = model.decode(params, activations, mode=DecodeMode.TRAIN, posterior_up_to=up_to,
                               temperature=temperature, rng=rng)
        return _pixels(model, params, xhat, rng, use_mean)


def sample(model: VeryDeepVAE, params: Parameters, n: int, rng: np.random.Generator,
           temperature: float = 1.0, use_mean: bool = False) -> np.ndarray:
    """Unconditional uint8 (n, H, W, C) samples with prior stds scaled by temperature."""
    with F.no_grad():
        xhat, _ = model.decode(params, mode=DecodeMode.SAMPLE, temperature=temperature, batch_size=n, rng=rng)
        return _pixels(model, params, xhat, rng, use_mean)
