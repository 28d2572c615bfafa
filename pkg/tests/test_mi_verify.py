import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.errors import ContractError
from app.mi_verify import (
    analytic_club_value,
    club_estimate,
    club_from_posterior,
    gen_correlated_gaussian,
    infonce_estimate,
    nll_plateaued,
    sandwich_report,
    true_gaussian_mi,
)
from app.models.config import GaussianPairSpec, MiBenchConfig


@pytest.mark.parametrize(
    "rho, dim, expected",
    [(0.0, 1, 0.0), (0.5, 1, -0.5 * math.log(0.75)), (0.9, 2, -math.log(0.19)), (-0.5, 1, -0.5 * math.log(0.75))],
)
def test_true_gaussian_mi(rho, dim, expected):
    assert true_gaussian_mi(rho, dim) == pytest.approx(expected)


@pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
def test_true_gaussian_mi_rejects_degenerate_rho(rho):
    with pytest.raises(ContractError):
        true_gaussian_mi(rho)
    with pytest.raises(ContractError):
        analytic_club_value(rho)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.95, 0.95))
def test_analytic_club_bounds_true_mi(rho):
    assert analytic_club_value(rho) >= true_gaussian_mi(rho) - 1e-12


def test_gaussian_pairs_have_requested_correlation():
    x, z = gen_correlated_gaussian(GaussianPairSpec(dim=2, rho=0.6, samples=20000, seed=1))
    assert x.shape == z.shape == (20000, 2)
    for d in range(2):
        assert np.corrcoef(x[:, d], z[:, d])[0, 1] == pytest.approx(0.6, abs=0.03)
        assert z[:, d].std() == pytest.approx(1.0, abs=0.03)


def test_gaussian_pair_spec_validation():
    with pytest.raises(ValueError):
        GaussianPairSpec(rho=1.0)
    with pytest.raises(ValueError):
        GaussianPairSpec(rho=0.1, samples=10)


@pytest.mark.parametrize("rho", [0.0, 0.3, 0.5])
def test_club_with_true_conditional_matches_analytic_value(rho):
    n = 20000
    x, z = gen_correlated_gaussian(GaussianPairSpec(rho=rho, samples=n, seed=7))
    sigma = np.full_like(x, math.sqrt(1.0 - rho**2))
    estimate = club_from_posterior(rho * x, sigma, z)
    assert abs(estimate - analytic_club_value(rho)) <= 3.0 / math.sqrt(n)


def test_club_closed_form_matches_pairwise_average():
    rng = np.random.default_rng(0)
    mu, z = rng.normal(size=(30, 2)), rng.normal(size=(30, 2))
    sigma = rng.uniform(0.5, 1.5, size=(30, 2))

    def log_q(i, k):
        return float((-0.5 * (z[k] - mu[i]) ** 2 / sigma[i] ** 2 - np.log(sigma[i])).sum())

    positive = np.mean([log_q(i, i) for i in range(30)])
    contrast = np.mean([log_q(i, k) for i in range(30) for k in range(30)])
    assert club_from_posterior(mu, sigma, z) == pytest.approx(positive - contrast)


def test_nll_plateau_detection():
    assert not nll_plateaued([1.0] * 10)
    assert nll_plateaued([1.0] * 100)
    assert not nll_plateaued(list(np.linspace(10.0, 1.0, 100)))


def test_infonce_estimate_contracts():
    x, z = gen_correlated_gaussian(GaussianPairSpec(rho=0.5, samples=100, seed=0))
    with pytest.raises(ContractError):
        infonce_estimate(x, z, MiBenchConfig(batch=64, steps=1))


def test_infonce_never_exceeds_log_batch():
    x, z = gen_correlated_gaussian(GaussianPairSpec(rho=0.99, samples=400, seed=0))
    cfg = MiBenchConfig(batch=16, steps=50, hidden=8)
    assert infonce_estimate(x, z, cfg) <= math.log(16) + 1e-9


def test_club_estimate_reports_reliability():
    x, z = gen_correlated_gaussian(GaussianPairSpec(rho=0.5, samples=400, seed=0))
    result = club_estimate(x, z, MiBenchConfig(steps=10, batch=32, hidden=8))
    assert not result.reliable
    assert math.isfinite(result.estimate) and math.isfinite(result.final_nll)


def test_sandwich_report_is_deterministic_across_workers():
    cfg = MiBenchConfig(rhos=(0.0, 0.5), samples=400, steps=20, batch=32, hidden=8)
    serial = sandwich_report(cfg)
    threaded = sandwich_report(cfg.model_copy(update={"workers": 2}))
    assert serial.rows == threaded.rows
    assert [r.rho for r in serial.rows] == [0.0, 0.5]
    assert all(r.true_mi == pytest.approx(true_gaussian_mi(r.rho)) for r in serial.rows)


@pytest.mark.slow
def test_sandwich_holds_on_correlated_gaussians():
    cfg = MiBenchConfig(rhos=(0.0, 0.3, 0.6, 0.9), samples=10000, steps=1500, batch=128, delta=0.1)
    report = sandwich_report(cfg)
    assert report.passed, report.failures
    at_zero = report.rows[0]
    assert at_zero.infonce <= 0.05
