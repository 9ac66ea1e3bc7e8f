import math

import numpy as np
import pytest

from vdvae import autodiff as F
from vdvae.autodiff import Tensor
from vdvae.errors import BlockSpecError, ConfigError, ShapeError
from vdvae.model import (
    Bottleneck,
    DecodeMode,
    ModelConfig,
    Parameters,
    VeryDeepVAE,
    apply_residual_scaling,
    group_independent,
    parse_block_spec,
)


def small_config(**overrides) -> ModelConfig:
    base = dict(width=16, zdim=2, enc_blocks="8x1,4x1,1x1", dec_blocks="1x2,4x2,8x4", image_size=8,
                image_channels=3, ff_group_size=4, dmol_mixtures=2)
    base.update(overrides)
    return ModelConfig(**base)


def normalized_input(rng, batch=2, config=None):
    config = config or small_config()
    return Tensor(rng.standard_normal((batch, config.image_channels, config.image_size, config.image_size)))


# block specs

def test_parse_encoder_spec():
    spec = parse_block_spec("32x10,16x10,8x10,4x10,1x10")
    assert spec.ladder == ((32, 10), (16, 10), (8, 10), (4, 10), (1, 10))
    assert not spec.increasing


def test_parse_decoder_spec_depth():
    spec = parse_block_spec("1x1,4x2,8x5,16x10,32x11")
    assert spec.ladder == ((1, 1), (4, 2), (8, 5), (16, 10), (32, 11))
    assert spec.total_blocks == 29
    assert ModelConfig.cifar10().stochastic_depth == 29


@pytest.mark.parametrize("text", ["32x10,33x5", "", "32x0", "8x2,8x2", "8x2,4x1,16x1", "axb"])
def test_parse_rejects_bad_specs(text):
    with pytest.raises(BlockSpecError):
        parse_block_spec(text)


def test_config_rejects_mismatched_resolutions():
    with pytest.raises(ConfigError):
        small_config(dec_blocks="1x2,2x2,8x4").validate()


# layers

def test_bottleneck_is_identity_at_init(rng):
    params = Parameters()
    block = Bottleneck("blk", 8, 2, 8, zero_last=True)
    block.init(params, rng)
    x = Tensor(rng.standard_normal((2, 8, 4, 4)))
    out = block(params, x)
    assert out.shape == x.shape
    np.testing.assert_array_equal(out.data, x.data)


def test_encoder_activations_at_init(rng):
    model = VeryDeepVAE(small_config())
    params = model.init_params(rng)
    x = normalized_input(rng)
    acts = model.encode(params, x)
    assert sorted(acts) == [1, 4, 8]
    features = model.encoder.in_conv(params, x)
    np.testing.assert_array_equal(acts[8].data, features.data)
    np.testing.assert_array_equal(acts[4].data, F.avg_pool(features, 2).data)
    assert acts[1].shape == (2, 16, 1, 1)


def test_identical_images_give_identical_activations(rng):
    model = VeryDeepVAE(small_config())
    params = model.init_params(rng)
    image = rng.standard_normal((1, 3, 8, 8))
    acts = model.encode(params, Tensor(np.concatenate([image, image])))
    for h in acts.values():
        np.testing.assert_allclose(h.data[0], h.data[1], rtol=1e-6, atol=1e-7)


def test_conv_downsampling_adds_parameters():
    pooled = VeryDeepVAE(small_config())
    conv = VeryDeepVAE(small_config(downsample_mode="conv"))
    assert "encoder.down4.weight" in conv.init_params(0)
    assert conv.parameter_count() > pooled.parameter_count()


# residual scaling

def test_residual_scaling_factor():
    params = Parameters()
    params.register("w", np.ones(3))
    assert apply_residual_scaling(params, 1, ["w"]) == 1.0
    assert apply_residual_scaling(params, 45, ["w"]) == pytest.approx(0.14907, abs=1e-5)
    np.testing.assert_allclose(params["w"].data, np.full(3, 1.0 / math.sqrt(45)), rtol=1e-6)


def test_init_scales_decoder_feedforward_only_when_enabled():
    config = small_config()
    scaled = VeryDeepVAE(config).init_params(7)
    plain = VeryDeepVAE(small_config(residual_scaling=False)).init_params(7)
    n = config.stochastic_depth
    key = "decoder.l3.feedforward.b.weight"
    np.testing.assert_allclose(scaled[key].data, plain[key].data / math.sqrt(n), rtol=1e-6)
    untouched = "decoder.l3.feedforward.a.weight"
    np.testing.assert_array_equal(scaled[untouched].data, plain[untouched].data)


# top-down path

def test_stochastic_depth_and_layout():
    model = VeryDeepVAE(small_config())
    assert model.stochastic_depth == 8
    assert model.effective_depth == 8
    assert model.latent_layout()[:3] == [(1, 2), (1, 2), (4, 32)]


def test_posterior_head_has_two_zdim_channels():
    model = VeryDeepVAE(small_config())
    params = model.init_params(0)
    assert params["decoder.l0.posterior.c4.weight"].shape[0] == 2 * model.config.zdim


def test_zero_noise_gives_posterior_mean(rng):
    model = VeryDeepVAE(small_config())
    params = model.init_params(rng)
    eps = [np.zeros(blk.latent_shape(2)) for blk in model.blocks]
    _, state = model.forward(params, normalized_input(rng), eps=eps)
    for record in state.records:
        np.testing.assert_array_equal(record.z.data, record.q.mean.data)


def test_zero_temperature_sample_is_prior_mean(rng):
    model = VeryDeepVAE(small_config())
    params = model.init_params(rng)
    _, state = model.decode(params, mode=DecodeMode.SAMPLE, temperature=0.0, batch_size=3, rng=rng)
    assert len(state) == model.stochastic_depth
    for record in state.records:
        assert record.q is None and record.kl is None
        np.testing.assert_array_equal(record.z.data, record.p.mean.data)


def test_sample_mode_never_reads_activations(rng):
    model = VeryDeepVAE(small_config())
    params = model.init_params(rng)
    xhat, _ = model.decode(params, mode=DecodeMode.SAMPLE, batch_size=2, rng=rng)
    assert xhat.shape == (2, 16, 8, 8)
    acts = model.encode(params, normalized_input(rng))
    with pytest.raises(ConfigError):
        model.decode(params, acts, mode=DecodeMode.SAMPLE, rng=rng)


def test_decode_needs_noise_source(rng):
    model = VeryDeepVAE(small_config())
    params = model.init_params(rng)
    with pytest.raises(ConfigError):
        model.decode(params, mode=DecodeMode.SAMPLE, batch_size=1)


def test_train_mode_without_activations_fails(rng):
    model = VeryDeepVAE(small_config())
    params = model.init_params(rng)
    acts = model.encode(params, normalized_input(rng))
    del acts[4]
    with pytest.raises(ShapeError):
        model.decode(params, acts, rng=rng)


def test_partial_posterior_only_below_resolution(rng):
    model = VeryDeepVAE(small_config())
    params = model.init_params(rng)
    acts = model.encode(params, normalized_input(rng))
    _, state = model.decode(params, acts, posterior_up_to=4, temperature=0.4, rng=rng)
    assert [r.q is not None for r in state.records] == [True] * 4 + [False] * 4


def test_explicit_noise_makes_forward_deterministic(rng):
    model = VeryDeepVAE(small_config())
    params = model.init_params(rng)
    x = normalized_input(rng)
    eps = [rng.standard_normal(blk.latent_shape(2)) for blk in model.blocks]
    first, _ = model.forward(params, x, eps=eps)
    second, _ = model.forward(params, x, eps=eps)
    assert first.logits.data.tobytes() == second.logits.data.tobytes()


@pytest.mark.parametrize("depth", [8, 32, 64])
def test_deep_forward_is_finite_at_init(rng, depth):
    model = VeryDeepVAE(ModelConfig.toy(depth=depth))
    params = model.init_params(rng)
    dmol, state = model.forward(params, normalized_input(rng, config=model.config), rng=rng)
    assert model.stochastic_depth == depth
    assert np.all(np.isfinite(dmol.means.data))
    assert all(math.isfinite(v) for v in state.kl_values())


def test_shared_pseudo_input_prior(rng):
    config = small_config(prior_mode="shared_pseudoinput")
    model = VeryDeepVAE(config)
    params = model.init_params(rng)
    assert not any(".prior." in name for name in params)
    assert "decoder.l0.pseudo_input.a.weight" in params
    _, state = model.forward(params, normalized_input(rng, config=config), rng=rng)
    assert all(math.isfinite(v) for v in state.kl_values())


# execution plans

def test_group_independent_plans():
    spec = parse_block_spec("1x2,4x2,8x4")
    assert group_independent(spec, 1).effective_depth == 8
    assert group_independent(spec, 2).groups == ((0, 1), (2, 3), (4, 5), (6, 7))
    assert group_independent(parse_block_spec("1x16,4x16,8x16"), 16).effective_depth == 3
    with pytest.raises(ConfigError):
        group_independent(spec, 3)
    with pytest.raises(ConfigError):
        group_independent(spec, 0)


def test_grouping_keeps_parameters_identical(rng):
    plain = VeryDeepVAE(small_config())
    grouped = VeryDeepVAE(small_config(independent_group_size=2))
    p1, p2 = plain.init_params(3), grouped.init_params(3)
    assert grouped.effective_depth == 4
    assert p1.count() == p2.count()
    assert p1.fingerprint() == p2.fingerprint()
    dmol, state = grouped.forward(p2, normalized_input(rng), rng=rng)
    assert len(state) == 8
    assert np.all(np.isfinite(dmol.logits.data))
