import math
from dataclasses import replace

import numpy as np
import pytest

from vdvae.data import SyntheticConfig, generate_synthetic
from vdvae.diagnostics import (
    COLLAPSE_THRESHOLD_BPD,
    AblationCell,
    AblationResult,
    RateProfile,
    depth_ablation,
    kl_per_layer,
    latent_fractions,
    layer_distribution_ablation,
    partial_reconstruct,
    plot_rate_profile,
    reconstruct,
    residual_scaling_ablation,
    sample,
    with_decoder_depth,
)
from vdvae.errors import ConfigError
from vdvae.model import ModelConfig, VeryDeepVAE, parse_block_spec
from vdvae.training import TrainConfig, Trainer, compute_stats


@pytest.fixture
def setup():
    dataset = generate_synthetic(SyntheticConfig(n=16, n_val=6, seed=3))
    model = VeryDeepVAE(ModelConfig.toy(depth=5))
    params = model.init_params(0)
    return model, params, dataset, compute_stats(dataset.train)


def test_latent_fractions_for_cifar10_ladder():
    fractions = latent_fractions(parse_block_spec("1x1,4x2,8x5,16x10,32x11"), zdim=16)
    total = 16 * (1 + 2 * 16 + 5 * 64 + 10 * 256 + 11 * 1024)
    assert fractions[1] == pytest.approx(16 / total)
    assert fractions[4] == pytest.approx((16 + 2 * 16 * 16) / total)
    assert fractions[32] == 1.0
    values = [fractions[r] for r in sorted(fractions)]
    assert values == sorted(values)


def test_rate_profile_accumulates(tmp_path):
    profile = RateProfile(kl_bpd=[0.5, 0.0, 0.25], resolutions=[1, 4, 4])
    np.testing.assert_allclose(profile.cumulative, [0.5, 0.5, 0.75])
    assert profile.total == 0.75
    assert profile.collapsed_layers() == [1]
    assert profile.rows()[2] == (2, 4, 0.25, 0.75)
    profile.write_csv(tmp_path / "rates.csv")
    lines = (tmp_path / "rates.csv").read_text().splitlines()
    assert lines[0] == "layer,resolution,kl_bpd,cum_kl_bpd"
    assert lines[1] == "0,1,0.5,0.5"


def test_empty_rate_profile():
    assert RateProfile(kl_bpd=[], resolutions=[]).total == 0.0


def test_kl_per_layer_covers_every_layer(setup, tmp_path):
    model, params, dataset, stats = setup
    profile = kl_per_layer(model, params, dataset.val, stats, batch_size=4, label="init")
    assert len(profile.kl_bpd) == model.stochastic_depth
    assert profile.resolutions == model.dec_spec.layer_resolutions
    assert np.all(profile.kl_bpd >= -1e-6)
    assert math.isfinite(profile.extra["eval_bpd"])
    plot_rate_profile([profile], tmp_path / "rates.png")
    assert (tmp_path / "rates.png").stat().st_size > 0


def test_reconstruct_is_seeded(setup):
    model, params, dataset, stats = setup
    first = reconstruct(model, params, dataset.val[:3], stats, np.random.default_rng(5))
    second = reconstruct(model, params, dataset.val[:3], stats, np.random.default_rng(5))
    assert first.shape == (3, 8, 8, 3)
    assert first.dtype == np.uint8
    np.testing.assert_array_equal(first, second)


def test_partial_reconstruct_at_finest_resolution_is_full(setup):
    model, params, dataset, stats = setup
    full = reconstruct(model, params, dataset.val[:2], stats, np.random.default_rng(8))
    partial = partial_reconstruct(model, params, dataset.val[:2], stats, up_to=8, rng=np.random.default_rng(8))
    np.testing.assert_array_equal(full, partial)


def test_partial_reconstruct_rejects_unknown_resolution(setup):
    model, params, dataset, stats = setup
    with pytest.raises(ConfigError):
        partial_reconstruct(model, params, dataset.val[:1], stats, up_to=2, rng=np.random.default_rng(0))


def test_coarse_partial_reconstruct_runs(setup):
    model, params, dataset, stats = setup
    out = partial_reconstruct(model, params, dataset.val[:2], stats, up_to=1, rng=np.random.default_rng(0),
                              use_mean=True)
    assert out.shape == (2, 8, 8, 3)


@pytest.mark.parametrize("temperature", [0.0, 0.4, 1.0])
def test_sample_shape(setup, temperature):
    model, params, _, _ = setup
    images = sample(model, params, 4, np.random.default_rng(1), temperature=temperature)
    assert images.shape == (4, 8, 8, 3)
    assert images.dtype == np.uint8


def test_posterior_equal_to_prior_flags_every_layer(setup):
    model, params, dataset, stats = setup
    forced = params.copy(requires_grad=False)
    for blk in model.blocks:
        for name in (blk.posterior.c4.weight_name, blk.posterior.c4.bias_name):
            forced[name].data = np.zeros_like(forced[name].data)
    profile = kl_per_layer(model, forced, dataset.val, stats, batch_size=4)
    np.testing.assert_array_equal(profile.kl_bpd, 0.0)
    assert profile.collapsed_layers() == list(range(model.stochastic_depth))


def test_lower_temperature_narrows_samples(setup):
    model, params, _, _ = setup
    coupled = params.copy(requires_grad=False)
    rng = np.random.default_rng(4)
    for blk in model.blocks:
        weight = coupled[blk.z_proj.weight_name]
        weight.data = rng.normal(0.0, 0.5, size=weight.shape).astype(weight.dtype)

    def pixel_variance(temperature):
        images = sample(model, coupled, 256, np.random.default_rng(9), temperature=temperature, use_mean=True)
        return images.astype(np.float64).var(axis=0).mean()

    assert pixel_variance(0.0) == 0.0
    assert pixel_variance(0.6) < pixel_variance(1.0)


def test_with_decoder_depth():
    base = ModelConfig.toy(depth=8)
    assert with_decoder_depth(base, 12).dec_blocks == "1x1,4x1,8x10"
    assert with_decoder_depth(base, 12).stochastic_depth == 12
    with pytest.raises(ConfigError):
        with_decoder_depth(base, 2)


def test_ablation_result_summary(tmp_path):
    result = AblationResult(kind="depth", cells=[
        AblationCell("depth4", 0, 2.0, 100, "f", 4),
        AblationCell("depth4", 1, 4.0, 100, "f", 4),
        AblationCell("depth8", 0, float("nan"), 100, "f", 8, diverged=True),
    ])
    assert result.configs() == ["depth4", "depth8"]
    means = result.mean_loss()
    assert means["depth4"] == 3.0
    assert math.isnan(means["depth8"])
    assert result.parameter_counts() == {100}
    result.write_csv(tmp_path / "ablation.csv")
    assert (tmp_path / "ablation.csv").read_text().splitlines()[1] == "depth4,0,2.0,100"


def test_ablations_validate_before_training():
    dataset = generate_synthetic(SyntheticConfig(n=8, n_val=2))
    base = ModelConfig.toy(depth=8)
    with pytest.raises(ConfigError):
        depth_ablation(base, [1, 5], [0], TrainConfig.toy(total_steps=1), dataset)
    with pytest.raises(ConfigError):
        layer_distribution_ablation(base, ["1x1,4x1,8x2", "1x1,4x1,8x3"], [0], TrainConfig.toy(total_steps=1),
                                    dataset)


def test_depth_ablation_keeps_parameters_identical():
    dataset = generate_synthetic(SyntheticConfig(n=16, n_val=4, seed=1))
    base = ModelConfig.toy(depth=6)  # decoder 1x1,4x1,8x4
    result = depth_ablation(base, [1], [0, 1], TrainConfig.toy(total_steps=2), dataset)
    assert [c.effective_depth for c in result.cells] == [6, 6]
    assert len(result.parameter_counts()) == 1
    assert all(math.isfinite(c.val_loss_bpd) for c in result.cells)


@pytest.mark.slow
def test_deeper_effective_hierarchy_fits_better():
    dataset = generate_synthetic(SyntheticConfig(n=1000, n_val=200, seed=1))
    base = replace(ModelConfig.toy(), dec_blocks="8x8")
    result = depth_ablation(base, [1, 8], [0, 1, 2], TrainConfig.toy(total_steps=2000), dataset)
    assert result.configs() == ["depth8", "depth1"]
    assert len(result.parameter_counts()) == 1
    assert not any(c.diverged for c in result.cells)
    means = result.mean_loss()
    assert means["depth8"] < means["depth1"]


@pytest.mark.slow
def test_trained_first_layer_does_not_collapse():
    dataset = generate_synthetic(SyntheticConfig(n=1000, n_val=200, seed=1))
    trainer = Trainer(dataset, replace(ModelConfig.toy(), dec_blocks="8x8"), TrainConfig.toy(total_steps=2000))
    trainer.run()
    profile = kl_per_layer(trainer.model, trainer.state.ema, dataset.val, trainer.state.stats, batch_size=50)
    assert profile.kl_bpd[0] > COLLAPSE_THRESHOLD_BPD
    assert 0 not in profile.collapsed_layers()


@pytest.mark.slow
def test_residual_scaling_ablation_labels():
    dataset = generate_synthetic(SyntheticConfig(n=64, n_val=16, seed=1))
    result = residual_scaling_ablation(ModelConfig.toy(), [6], [0], TrainConfig.toy(total_steps=10), dataset)
    assert result.configs() == ["depth6-scaled", "depth6-unscaled"]
