import math

import numpy as np
import pytest

from vdvae.errors import ConfigError
from vdvae.model import VeryDeepVAE
from vdvae.theory import (
    DiscreteARModel,
    miniature_config,
    noise_to_latents,
    prop1_equivalence_check,
    prop2_jacobian_check,
    random_ar_model,
    vae_elbo,
    vae_marginal,
)


# autoregressive equivalence

def test_single_variable_elbo_is_log_prior():
    ar = DiscreteARModel(1, 2, [np.array([[0.7, 0.3]])])
    assert vae_elbo(ar, (0,)) == pytest.approx(math.log(0.7), abs=1e-15)
    assert vae_elbo(ar, (1,)) == pytest.approx(math.log(0.3), abs=1e-15)
    assert vae_marginal(ar, (0,)) == pytest.approx(0.7, abs=1e-15)


def test_uniform_model_elbo():
    ar = DiscreteARModel.uniform(4)
    assert vae_elbo(ar, (1, 0, 1, 1)) == pytest.approx(-4 * math.log(2), abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_random_models_match_exactly(n):
    report = prop1_equivalence_check(random_ar_model(n, np.random.default_rng(n)))
    assert report.passed, report.summary()
    assert report.n_configurations == 2 ** n
    assert report.total_mass == pytest.approx(1.0, abs=1e-12)


def test_hundred_random_models_match_exactly():
    worst = 0.0
    for seed in range(100):
        n = 1 + seed % 6
        report = prop1_equivalence_check(random_ar_model(n, np.random.default_rng(1000 + seed)))
        assert report.passed, f"seed {seed}: {report.summary()}"
        assert report.total_mass == pytest.approx(1.0, abs=1e-12)
        worst = max(worst, report.max_discrepancy)
    assert worst < 1e-12


def test_larger_alphabet():
    report = prop1_equivalence_check(random_ar_model(3, np.random.default_rng(0), alphabet=3))
    assert report.passed
    assert report.n_configurations == 27


def test_enumeration_limit():
    with pytest.raises(ConfigError, match="enumeration"):
        prop1_equivalence_check(random_ar_model(13, np.random.default_rng(0)))


def test_table_shapes_are_checked():
    with pytest.raises(ConfigError):
        DiscreteARModel(2, 2, [np.full((1, 2), 0.5), np.full((1, 2), 0.5)])


def test_report_summary_mentions_status():
    report = prop1_equivalence_check(DiscreteARModel.uniform(2))
    assert report.summary().startswith("[PASS]")


# triangular noise-to-latent Jacobian

def test_jacobian_is_lower_triangular_with_positive_diagonal():
    report = prop2_jacobian_check(rng=np.random.default_rng(2))
    assert report.layer_sizes == [2, 2, 2]
    assert report.passed, report.summary()
    assert report.max_diag_error < 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_jacobian_is_triangular_for_random_parameters(seed):
    report = prop2_jacobian_check(rng=np.random.default_rng(100 + seed))
    assert report.passed, report.summary()
    assert report.max_diag_error < 1e-6


def test_jacobian_check_on_deeper_miniature():
    model = VeryDeepVAE(miniature_config(layers=5, zdim=1))
    report = prop2_jacobian_check(model, rng=np.random.default_rng(7))
    assert report.layer_sizes == [1] * 5
    assert report.passed, report.summary()


def test_zero_temperature_latents_are_prior_means(float64, rng):
    model = VeryDeepVAE(miniature_config())
    params = model.init_params(rng)
    eps = rng.standard_normal(6)
    z_cold, std = noise_to_latents(model, params, eps, temperature=0.0)
    z_zero, _ = noise_to_latents(model, params, np.zeros(6))
    np.testing.assert_allclose(z_cold, z_zero)
    assert np.all(std > 0)
