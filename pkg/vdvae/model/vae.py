"""Bottom-up encoder, top-down stochastic decoder and the output head."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .. import autodiff as F
from ..autodiff import Tensor
from ..dist import DmolParams, GaussianParams, gaussian_kl, gaussian_sample, n_output_channels
from ..errors import ConfigError, ShapeError
from .blockspec import BlockSpec
from .config import DownsampleMode, ModelConfig, PriorMode
from .layers import Bottleneck, Conv2d, FeedForward
from .params import Parameters

logger = logging.getLogger(__name__)

XHAT_INIT = "decoder.xhat_init"


class DecodeMode(Enum):
    TRAIN = "train"
    SAMPLE = "sample"


@dataclass
class LayerRecord:
    """What one top-down block produced. q and kl are None for prior-only layers."""
    index: int
    resolution: int
    q: GaussianParams | None
    p: GaussianParams
    z: Tensor
    kl: Tensor | None


@dataclass
class TopDownState:
    records: list[LayerRecord] = field(default_factory=list)
    xhat: Tensor | None = None

    def __len__(self) -> int:
        return len(self.records)

    def kl_values(self) -> list[float]:
        """Per-layer KL summed over batch and latent dims."""
        return [float(np.sum(r.kl.data)) if r.kl is not None else 0.0 for r in self.records]


# --------------------------------------------------------------- execution plan

@dataclass(frozen=True)
class ExecutionPlan:
    """Partition of the decoder layers into groups that read the same input."""
    groups: tuple[tuple[int, ...], ...]

    @classmethod
    def sequential(cls, n_layers: int) -> ExecutionPlan:
        return cls(tuple((i,) for i in range(n_layers)))

    @property
    def n_layers(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def effective_depth(self) -> int:
        return len(self.groups)


def group_independent(dec_spec: BlockSpec, k: int) -> ExecutionPlan:
    """Group K consecutive blocks per resolution so they share one input x̂.

    Groups never cross a resolution change; K must divide every block count.
    """
    if k < 1:
        raise ConfigError(f"group size must be >= 1, got {k}")
    bad = [f"{res}x{count}" for res, count in dec_spec.ladder if count % k]
    if bad:
        raise ConfigError(f"group size {k} does not tile decoder regions {bad}")
    groups = []
    index = 0
    for _, count in dec_spec.ladder:
        for start in range(0, count, k):
            groups.append(tuple(range(index + start, index + start + k)))
        index += count
    return ExecutionPlan(tuple(groups))


def apply_residual_scaling(params: Parameters, depth: int, keys: Iterable[str]) -> float:
    """Multiply the named final-conv weights by 1/sqrt(depth). Returns the factor."""
    if depth < 1:
        raise ConfigError(f"residual depth must be >= 1, got {depth}")
    factor = 1.0 / math.sqrt(depth)
    for key in keys:
        tensor = params[key]
        tensor.data = (tensor.data * factor).astype(tensor.dtype)
    return factor


# --------------------------------------------------------------------- encoder

class Encoder:
    """3x3 input conv, then residual bottleneck blocks from fine to coarse."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.spec = config.enc_spec
        w, b = config.width, config.bottleneck_width
        self.in_conv = Conv2d("encoder.in", config.image_channels, w, kernel=3)
        self.blocks: dict[int, list[Bottleneck]] = {}
        self.down: dict[int, Conv2d] = {}
        prev = None
        for res, count in self.spec.ladder:
            if prev is not None and config.downsample_mode is DownsampleMode.CONV:
                factor = prev // res
                self.down[res] = Conv2d(f"encoder.down{res}", w, w, kernel=factor, stride=factor)
            self.blocks[res] = [
                Bottleneck(f"encoder.r{res}.b{i}", w, b, w, use_3x3=res > 1, residual=True, zero_last=True)
                for i in range(count)
            ]
            prev = res

    def residual_keys(self) -> list[str]:
        return [blk.final_weight_name for blocks in self.blocks.values() for blk in blocks]

    def init(self, params: Parameters, rng: np.random.Generator) -> None:
        self.in_conv.init(params, rng)
        for res, _ in self.spec.ladder:
            if res in self.down:
                self.down[res].init(params, rng)
            for blk in self.blocks[res]:
                blk.init(params, rng)

    def __call__(self, params: Parameters, x: Tensor) -> dict[int, Tensor]:
        if x.ndim != 4 or x.shape[1] != self.config.image_channels or x.shape[2] != self.config.image_size:
            raise ShapeError(f"encoder input {x.shape} does not match "
                             f"({self.config.image_channels}, {self.config.image_size}, {self.config.image_size})")
        h = self.in_conv(params, x)
        activations: dict[int, Tensor] = {}
        prev = None
        for res, _ in self.spec.ladder:
            if prev is not None:
                h = self.down[res](params, h) if res in self.down else F.avg_pool(h, prev // res)
            for blk in self.blocks[res]:
                h = blk(params, h)
            activations[res] = h
            prev = res
        return activations


# ------------------------------------------------------------------- decoder

class TopDownBlock:
    """One stochastic layer: prior, posterior, latent projection and feedforward."""

    def __init__(self, index: int, resolution: int, config: ModelConfig):
        self.index = index
        self.resolution = resolution
        self.zdim = config.zdim
        self.width = config.width
        self.prior_mode = config.prior_mode
        w, b, zdim = config.width, config.bottleneck_width, config.zdim
        use_3x3 = resolution > 1
        prefix = f"decoder.l{index}"
        self.posterior = Bottleneck(f"{prefix}.posterior", 2 * w, b, 2 * zdim, use_3x3=use_3x3, residual=False)
        self.prior: Bottleneck | None = None
        self.pseudo_input: FeedForward | None = None
        if config.prior_mode is PriorMode.SEPARATE:
            self.prior = Bottleneck(f"{prefix}.prior", w, b, 2 * zdim + w, use_3x3=use_3x3,
                                    residual=False, zero_last=True)
        else:
            self.pseudo_input = FeedForward(f"{prefix}.pseudo_input", w, config.ff_group_size, use_3x3=use_3x3)
        self.z_proj = Conv2d(f"{prefix}.z_proj", zdim, w, zero_weight=True)
        self.feedforward = FeedForward(f"{prefix}.feedforward", w, config.ff_group_size, use_3x3=use_3x3,
                                       residual=config.topdown_residual)

    @property
    def residual_key(self) -> str:
        return self.feedforward.final_weight_name

    def latent_shape(self, batch: int) -> tuple[int, int, int, int]:
        return batch, self.zdim, self.resolution, self.resolution

    def init(self, params: Parameters, rng: np.random.Generator) -> None:
        self.posterior.init(params, rng)
        if self.prior is not None:
            self.prior.init(params, rng)
        else:
            self.pseudo_input.init(params, rng)
        self.z_proj.init(params, rng)
        self.feedforward.init(params, rng)

    def prior_params(self, params: Parameters, xhat: Tensor) -> tuple[GaussianParams, Tensor | None]:
        if self.prior is not None:
            out = self.prior(params, xhat)
            p = GaussianParams.from_tensor(out, self.zdim)
            return p, F.slice_channels(out, 2 * self.zdim, 2 * self.zdim + self.width)
        pseudo = self.pseudo_input(params, xhat)
        raw = self.posterior(params, F.concat_channels([xhat, pseudo]))
        return GaussianParams.from_tensor(raw, self.zdim), None

    def __call__(self, params: Parameters, xhat: Tensor, h: Tensor | None, eps: np.ndarray,
                 mode: DecodeMode = DecodeMode.TRAIN, temperature: float = 1.0) -> tuple[Tensor, LayerRecord]:
        if xhat.shape[2] != self.resolution:
            raise ShapeError(f"layer {self.index} expects resolution {self.resolution}, got {xhat.shape[2]}")
        if mode is DecodeMode.TRAIN and h is None:
            raise ShapeError(f"layer {self.index}: train mode needs encoder activations")
        if h is not None and h.shape != xhat.shape:
            raise ShapeError(f"layer {self.index}: activations {h.shape} vs x̂ {xhat.shape}")

        p, prior_features = self.prior_params(params, xhat)
        if h is not None:
            q = GaussianParams.from_tensor(self.posterior(params, F.concat_channels([xhat, h])), self.zdim)
            z = gaussian_sample(q, eps)
            kl = gaussian_kl(q, p)
        else:
            q, kl = None, None
            z = gaussian_sample(p, eps, temperature)
        x = xhat if prior_features is None else xhat + prior_features
        out = self.feedforward(params, x + self.z_proj(params, z))
        return out, LayerRecord(self.index, self.resolution, q, p, z, kl)


class VeryDeepVAE:
    """Hierarchical VAE with one top-down block per decoder layer."""

    def __init__(self, config: ModelConfig, plan: ExecutionPlan | None = None):
        self.config = config.validate()
        self.dec_spec = config.dec_spec
        self.encoder = Encoder(config)
        self.blocks = [TopDownBlock(i, res, config) for i, res in enumerate(self.dec_spec.layer_resolutions)]
        self.plan = plan or group_independent(self.dec_spec, config.independent_group_size)
        if self.plan.n_layers != len(self.blocks):
            raise ConfigError(f"execution plan covers {self.plan.n_layers} layers, model has {len(self.blocks)}")
        self.n_out = n_output_channels(config.image_channels, config.dmol_mixtures)
        self.out_conv = Conv2d("decoder.out", config.width, self.n_out)

    @property
    def stochastic_depth(self) -> int:
        return len(self.blocks)

    @property
    def effective_depth(self) -> int:
        return self.plan.effective_depth

    def latent_layout(self) -> list[tuple[int, int]]:
        """(resolution, latent elements per image) for every layer."""
        return [(blk.resolution, blk.zdim * blk.resolution ** 2) for blk in self.blocks]

    def init_params(self, rng: np.random.Generator | int = 0) -> Parameters:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        params = Parameters()
        self.encoder.init(params, rng)
        params.register(XHAT_INIT, np.zeros((1, self.config.width, 1, 1)))
        for blk in self.blocks:
            blk.init(params, rng)
        self.out_conv.init(params, rng)
        if self.config.residual_scaling:
            enc_keys = self.encoder.residual_keys()
            apply_residual_scaling(params, len(enc_keys), enc_keys)
            factor = apply_residual_scaling(params, len(self.blocks), [b.residual_key for b in self.blocks])
            logger.debug("Scaled %d decoder residual convs by %.5f", len(self.blocks), factor)
        return params.freeze()

    def parameter_count(self) -> int:
        return self.init_params(0).count()

    def encode(self, params: Parameters, x: Tensor) -> dict[int, Tensor]:
        return self.encoder(params, F.as_tensor(x))

    def _noise(self, eps: Sequence[np.ndarray] | None, rng: np.random.Generator | None,
               blk: TopDownBlock, batch: int) -> np.ndarray:
        shape = blk.latent_shape(batch)
        if eps is not None:
            noise = np.asarray(eps[blk.index])
            if noise.shape != shape:
                raise ShapeError(f"noise for layer {blk.index} has shape {noise.shape}, expected {shape}")
            return noise
        return rng.standard_normal(shape)

    def decode(self, params: Parameters, activations: dict[int, Tensor] | None = None, *,
               mode: DecodeMode = DecodeMode.TRAIN, temperature: float = 1.0,
               posterior_up_to: int | None = None, batch_size: int | None = None,
               eps: Sequence[np.ndarray] | None = None,
               rng: np.random.Generator | None = None) -> tuple[Tensor, TopDownState]:
        """Run the top-down path from the learned 1x1 x̂.

        Layers at resolution <= posterior_up_to sample from the posterior, the
        rest from the prior at `temperature`. Train mode defaults to every layer
        using the posterior; sample mode never reads activations.
        """
        if mode is DecodeMode.SAMPLE:
            if activations is not None:
                raise ConfigError("sample mode does not take encoder activations")
            posterior_up_to = 0
        elif posterior_up_to is None:
            posterior_up_to = self.config.image_size
        if eps is None and rng is None:
            raise ConfigError("decode needs either explicit noise or an rng")
        if eps is not None and len(eps) != len(self.blocks):
            raise ShapeError(f"got noise for {len(eps)} layers, model has {len(self.blocks)}")

        if activations:
            batch = next(iter(activations.values())).shape[0]
        elif batch_size is not None:
            batch = batch_size
        else:
            raise ConfigError("batch_size is required without encoder activations")

        xhat = F.broadcast(params[XHAT_INIT], (batch, self.config.width, 1, 1))
        current = 1
        state = TopDownState()
        for group in self.plan.groups:
            res = self.blocks[group[0]].resolution
            if res != current:
                xhat = F.nn_upsample(xhat, res // current)
                current = res
            h = None
            if res <= posterior_up_to:
                if not activations or res not in activations:
                    raise ShapeError(f"missing encoder activations at resolution {res}")
                h = activations[res]
            layer_mode = DecodeMode.TRAIN if h is not None else DecodeMode.SAMPLE
            base = xhat
            outputs = []
            for index in group:
                blk = self.blocks[index]
                out, record = blk(params, base, h, self._noise(eps, rng, blk, batch), layer_mode, temperature)
                outputs.append(out)
                state.records.append(record)
            if len(outputs) == 1:
                xhat = outputs[0]
            else:
                for out in outputs:
                    xhat = xhat + (out - base)
        state.xhat = xhat
        return xhat, state

    def output_params(self, params: Parameters, xhat: Tensor) -> DmolParams:
        raw = self.out_conv(params, xhat)
        return DmolParams.from_tensor(raw, self.config.image_channels, self.config.dmol_mixtures)

    def forward(self, params: Parameters, x: Tensor, *, eps: Sequence[np.ndarray] | None = None,
                rng: np.random.Generator | None = None) -> tuple[DmolParams, TopDownState]:
        """Full reconstruction pass on normalized input x."""
        activations = self.encode(params, x)
        xhat, state = self.decode(params, activations, mode=DecodeMode.TRAIN, eps=eps, rng=rng)
        return self.output_params(params, xhat), state

