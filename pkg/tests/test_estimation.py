"""Method-of-moments hyperparameter fits."""

import json
import math

import numpy as np
import pytest
from scipy import stats

from hadr import CellSizeModel, fit_beta_mom, fit_dirichlet_mom, fit_negbin, fit_poisson
from hadr.estimation import dirichlet_to_json, size_model_from_json, size_model_to_json


def beta_binomial_cells(rng, m=2000, a=2.0, b=5.0):
    """Cells with Beta(a, b)-distributed first-category proportions."""
    n = rng.integers(20, 60, size=m)
    p = rng.beta(a, b, size=m)
    x = rng.binomial(n, p)
    return np.column_stack([x, n - x])


def observed_dispersion(counts):
    counts = np.asarray(counts, dtype=float)
    n = counts.sum(axis=1)
    p = counts.sum(axis=0) / n.sum()
    return ((counts - n[:, None] * p[None, :]) ** 2).sum(axis=0), p, n


def test_beta_recovery_within_20_percent():
    rng = np.random.default_rng(77)
    counts = beta_binomial_cells(rng)
    fit = fit_beta_mom(counts)
    assert fit.alpha[0] == pytest.approx(2.0, rel=0.2)
    assert fit.alpha[1] == pytest.approx(5.0, rel=0.2)
    # with two categories both columns imply the same concentration
    assert fit.alpha_dot_spread == pytest.approx(0.0, abs=1e-6)


def test_fit_reproduces_dispersion():
    """Each implied concentration plugs back to the observed s2_k exactly."""
    rng = np.random.default_rng(5)
    alpha = np.array([0.8, 1.5, 3.0])
    n = rng.integers(5, 40, size=400)
    counts = np.array([rng.multinomial(ni, rng.dirichlet(alpha)) for ni in n])
    fit = fit_dirichlet_mom(counts)
    s2, p, n = observed_dispersion(counts)
    big_n, big_q = n.sum(), (n**2).sum()
    for k, a0 in enumerate(fit.implied_concentrations):
        implied = p[k] * (1.0 - p[k]) * (a0 * big_n + big_q) / (a0 + 1.0)
        assert implied == pytest.approx(s2[k], rel=1e-8)
    assert fit.alpha_dot_spread == pytest.approx(
        fit.implied_concentrations.max() - fit.implied_concentrations.min()
    )
    np.testing.assert_allclose(fit.alpha, fit.p_hat * fit.implied_concentrations)


def test_k2_dirichlet_equals_beta():
    rng = np.random.default_rng(9)
    counts = beta_binomial_cells(rng, m=300)
    a = fit_dirichlet_mom(counts)
    b = fit_beta_mom(counts)
    np.testing.assert_array_equal(a.alpha, b.alpha)
    with pytest.raises(ValueError, match="exactly 2"):
        fit_beta_mom(np.ones((4, 3), dtype=int))


def test_fit_error_messages():
    with pytest.raises(ValueError, match="never occurs"):
        fit_dirichlet_mom([(3, 0), (5, 0)])
    with pytest.raises(ValueError, match="no overdispersion"):
        fit_dirichlet_mom([(2, 2), (3, 3), (5, 5)])
    with pytest.raises(ValueError, match="more dispersed than any Dirichlet"):
        fit_dirichlet_mom([(5, 0), (0, 5), (5, 0), (0, 5)])
    with pytest.raises(ValueError, match="at least one record"):
        fit_dirichlet_mom([(0, 0), (3, 2)])
    with pytest.raises(ValueError):
        fit_dirichlet_mom([(3, 2)])
    with pytest.raises(ValueError):
        fit_dirichlet_mom([(3, -1), (2, 2)])


def test_fit_poisson_is_sample_mean():
    model = fit_poisson([3, 5, 7])
    assert model.family == "poisson" and model.lam == 5.0 and model.r is None


def test_fit_poisson_zero_truncated():
    sizes = [1, 2, 2, 3, 5, 8, 1, 4]
    m = float(np.mean(sizes))
    model = fit_poisson(sizes, zero_truncated=True)
    assert model.lam / (1.0 - math.exp(-model.lam)) == pytest.approx(m, abs=1e-10)
    assert model.lam < m
    with pytest.raises(ValueError, match="sample mean above 1"):
        fit_poisson([1, 1, 1], zero_truncated=True)


def test_fit_size_sample_validation():
    with pytest.raises(ValueError):
        fit_poisson([4])
    with pytest.raises(ValueError):
        fit_poisson([0, 3])


def test_fit_negbin_moments():
    rng = np.random.default_rng(3)
    sizes = rng.negative_binomial(4, 0.35, size=5000) + 1
    model = fit_negbin(sizes)
    dist = stats.nbinom(model.r, model.lam)
    assert dist.mean() == pytest.approx(sizes.mean(), rel=1e-12)
    assert dist.var() == pytest.approx(sizes.var(ddof=1), rel=1e-12)


def test_fit_negbin_underdispersed():
    with pytest.raises(ValueError, match="use the poisson family"):
        fit_negbin([4, 4, 4, 4])


def test_size_model_validation():
    with pytest.raises(ValueError, match="unknown size family"):
        CellSizeModel(family="geometric", lam=0.5)
    with pytest.raises(ValueError):
        CellSizeModel(family="poisson", lam=0.0)
    with pytest.raises(ValueError, match="no shape"):
        CellSizeModel(family="poisson", lam=2.0, r=1.0)
    with pytest.raises(ValueError):
        CellSizeModel(family="negbin", lam=1.2, r=2.0)
    with pytest.raises(ValueError, match="shape"):
        CellSizeModel(family="negbin", lam=0.5)


def test_size_model_probabilities():
    model = CellSizeModel(family="poisson", lam=2.0)
    assert model.zero_mass() == pytest.approx(math.exp(-2.0), rel=1e-12)
    assert model.mean() == pytest.approx(2.0)
    np.testing.assert_allclose(model.pmf([0, 1, 2]), stats.poisson(2.0).pmf([0, 1, 2]))


@pytest.mark.parametrize(
    "model",
    [CellSizeModel(family="poisson", lam=4.6), CellSizeModel(family="negbin", lam=0.3, r=2.5)],
    ids=["poisson", "negbin"],
)
def test_tail_quantile(model):
    for mass in (1e-6, 1e-12):
        n = model.tail_quantile(mass)
        dist = model._dist()
        assert dist.sf(n) < mass
        assert n == 1 or dist.sf(n - 1) >= mass


def test_truncated_ppf_matches_conditional_quantiles():
    model = CellSizeModel(family="poisson", lam=2.0)
    dist = stats.poisson(2.0)
    f0 = dist.cdf(0)
    # conditional cdf at 1 splits the uniforms: below it maps to 1, above to 2+
    split = (dist.cdf(1) - f0) / (1.0 - f0)
    out = model.truncated_ppf(np.array([1e-9, split - 1e-9, split + 1e-9, 0.999999]))
    assert out.dtype == np.int64
    assert out[0] == 1 and out[1] == 1 and out[2] == 2
    assert out[3] > 5
    assert np.all(model.truncated_ppf(np.linspace(1e-6, 1 - 1e-6, 1000)) >= 1)


def test_size_model_json_round_trip():
    for model in (
        CellSizeModel(family="poisson", lam=3.25),
        CellSizeModel(family="negbin", lam=0.4, r=1.75),
    ):
        back = size_model_from_json(size_model_to_json(model))
        assert back == model
    text = size_model_to_json(CellSizeModel(family="poisson", lam=3.25))
    assert json.loads(text) == {"family": "poisson", "lambda": 3.25}
    assert text.endswith("\n")


def test_size_model_json_missing_field():
    with pytest.raises(ValueError, match="missing field 'lambda'"):
        size_model_from_json('{"family":"poisson"}')
    with pytest.raises(ValueError, match="missing field 'family'"):
        size_model_from_json('{"lambda":2.0}')


def test_dirichlet_json():
    rng = np.random.default_rng(11)
    fit = fit_beta_mom(beta_binomial_cells(rng, m=500))
    obj = json.loads(dirichlet_to_json(fit))
    assert obj["alpha"] == [float(a) for a in fit.alpha]
    assert obj["alpha_dot_spread"] == pytest.approx(fit.alpha_dot_spread)
