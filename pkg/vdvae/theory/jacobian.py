"""Block-lower-triangular structure of the prior's noise-to-latent map."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as F
from ..model import DecodeMode, ModelConfig, Parameters, VeryDeepVAE


def miniature_config(layers: int = 3, zdim: int = 2, width: int = 8) -> ModelConfig:
    """1x1 model with `layers` stochastic layers of `zdim` latents each."""
    return ModelConfig(width=width, zdim=zdim, enc_blocks="1x1", dec_blocks=f"1x{layers}", image_size=1,
                       image_channels=1, ff_group_size=4, dmol_mixtures=1)


def randomize_parameters(params: Parameters, rng: np.random.Generator, scale: float = 0.3) -> Parameters:
    """Copy of params with every entry redrawn from N(0, scale^2)."""
    out = params.copy(requires_grad=False)
    for _, tensor in out.items():
        tensor.data = rng.normal(0.0, scale, size=tensor.shape).astype(tensor.dtype)
    return out


def _split(model: VeryDeepVAE, eps_flat: np.ndarray) -> list[np.ndarray]:
    out, offset = [], 0
    for blk in model.blocks:
        shape = blk.latent_shape(1)
        size = int(np.prod(shape))
        out.append(eps_flat[offset:offset + size].reshape(shape))
        offset += size
    return out


def noise_to_latents(model: VeryDeepVAE, params: Parameters, eps_flat: np.ndarray,
                     temperature: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """(z of every layer concatenated, prior std of every layer concatenated)."""
    with F.no_grad():
        _, state = model.decode(params, mode=DecodeMode.SAMPLE, temperature=temperature, batch_size=1,
                                eps=_split(model, eps_flat))
    z = np.concatenate([r.z.data.reshape(-1) for r in state.records])
    std = np.concatenate([np.exp(r.p.log_std.data).reshape(-1) for r in state.records])
    return z.astype(np.float64), std.astype(np.float64)


def finite_difference_jacobian(model: VeryDeepVAE, params: Parameters, eps: np.ndarray,
                               step: float = 1e-6) -> np.ndarray:
    n = eps.size
    jac = np.zeros((n, n))
    for j in range(n):
        plus, minus = eps.copy(), eps.copy()
        plus[j] += step
        minus[j] -= step
        jac[:, j] = (noise_to_latents(model, params, plus)[0] - noise_to_latents(model, params, minus)[0]) / (2 * step)
    return jac


@dataclass
class Prop2Report:
    layer_sizes: list[int]
    max_upper_entry: float  # any dz_a / d eps_b with b a later layer
    max_block_offdiag: float  # off-diagonal entries inside a layer's own block
    min_diagonal: float
    max_diag_error: float  # |dz_i / d eps_i - prior std_i|
    tolerance: float

    @property
    def passed(self) -> bool:
        return (self.max_upper_entry < self.tolerance and self.max_block_offdiag < self.tolerance
                and self.min_diagonal > 0.0)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] triangular Jacobian over layers {self.layer_sizes}: upper {self.max_upper_entry:.2e}, "
                f"in-block off-diagonal {self.max_block_offdiag:.2e}, min diagonal {self.min_diagonal:.3e}, "
                f"diagonal vs prior std {self.max_diag_error:.2e}")


def prop2_jacobian_check(model: VeryDeepVAE | None = None, params: Parameters | None = None,
                         rng: np.random.Generator | None = None, tolerance: float = 1e-9,
                         step: float = 1e-6) -> Prop2Report:
    """Finite-difference Jacobian of eps -> z in sample mode, run in float64."""
    rng = rng or np.random.default_rng(0)
    with F.precision(np.float64):
        model = model or VeryDeepVAE(miniature_config())
        if params is None:
            params = randomize_parameters(model.init_params(rng), rng)
        else:
            params = params.copy(requires_grad=False)
            for _, tensor in params.items():
                tensor.data = tensor.data.astype(np.float64)
        sizes = [int(np.prod(blk.latent_shape(1))) for blk in model.blocks]
        eps = rng.standard_normal(sum(sizes))
        jac = finite_difference_jacobian(model, params, eps, step)
        _, std = noise_to_latents(model, params, eps)

    bounds = np.cumsum([0] + sizes)
    upper, offdiag = 0.0, 0.0
    for a in range(len(sizes)):
        rows = slice(bounds[a], bounds[a + 1])
        if a + 1 < len(sizes):
            upper = max(upper, float(np.max(np.abs(jac[rows, bounds[a + 1]:]))))
        block = jac[rows, rows]
        offdiag = max(offdiag, float(np.max(np.abs(block - np.diag(np.diag(block))))))
    diagonal = np.diag(jac)
    return Prop2Report(layer_sizes=sizes, max_upper_entry=upper, max_block_offdiag=offdiag,
                       min_diagonal=float(np.min(diagonal)), max_diag_error=float(np.max(np.abs(diagonal - std))),
                       tolerance=tolerance)
