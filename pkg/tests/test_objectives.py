import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.autodiff.gradcheck import grad_check
from app.autodiff.tensor import Tensor, precision
from app.errors import ContractError, ShapeError
from app.models.config import LossWeights
from app.nn.approx import GaussianPosterior
from app.objectives import (
    LossParts,
    approx_loss,
    combined_loss,
    info_nce_pair,
    max_mi_loss,
    min_mi_loss,
    normalize_patches,
    rec_loss,
)


def _latents(n, b, d, seed=0):
    rng = np.random.default_rng(seed)
    return [Tensor(rng.normal(size=(b, d)), requires_grad=True) for _ in range(n)]


def test_rec_loss_only_counts_masked_patches():
    pred = Tensor(np.zeros((1, 2, 3)))
    target = np.stack([np.full(3, 5.0), np.full(3, 1.0)])[None]
    assert rec_loss(pred, target, np.array([0, 1])).item() == pytest.approx(1.0)
    assert rec_loss(pred, target, np.array([1, 0])).item() == pytest.approx(25.0)


def test_rec_loss_errors():
    with pytest.raises(ContractError):
        rec_loss(Tensor(np.zeros((1, 2, 3))), np.zeros((1, 2, 3)), np.array([0, 0]))
    with pytest.raises(ShapeError):
        rec_loss(Tensor(np.zeros((1, 2, 3))), np.zeros((1, 2, 4)), np.array([1, 1]))


def test_normalize_patches_zero_mean_unit_variance():
    out = normalize_patches(np.random.default_rng(0).uniform(size=(2, 3, 16)))
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-9)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-3)


def test_info_nce_pair_identical_positive_gives_uniform_floor():
    with precision(np.float64):
        z = Tensor(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]))
        value = info_nce_pair(z, 0, 1, tau=1.0).item()
    expected = -math.log(math.e / (math.e + 1.0 + 1.0))
    assert value == pytest.approx(expected)


def test_info_nce_pair_contracts():
    z = Tensor(np.eye(3))
    with pytest.raises(ContractError):
        info_nce_pair(z, 1, 1, 0.1)
    with pytest.raises(ContractError):
        info_nce_pair(z, 0, 1, 0.0)


def test_max_mi_loss_equals_mean_of_pairwise_infonce():
    n, b, tau = 3, 2, 0.5
    with precision(np.float64):
        latents = _latents(n, b, 4)
        total = max_mi_loss(latents, tau).item()
        flat = Tensor(np.concatenate([t.data for t in latents]))
        manual = 0.0
        for i in range(n):
            for k in range(n):
                if i != k:
                    for s in range(b):
                        manual += info_nce_pair(flat, i * b + s, k * b + s, tau).item()
    assert total == pytest.approx(manual / (n * n * b))


def test_max_mi_loss_requires_two_masks():
    with pytest.raises(ContractError):
        max_mi_loss(_latents(1, 2, 3), 0.1)


def test_max_mi_loss_gradient_check():
    def f(t: Tensor) -> Tensor:
        return max_mi_loss([t[0:2], t[2:4], t[4:6]], 0.3)

    report = grad_check(f, np.random.default_rng(4).normal(size=(6, 3)))
    assert report.passed, report


def _posteriors(n, b, d, seed=1):
    rng = np.random.default_rng(seed)
    return [
        GaussianPosterior(
            Tensor(rng.normal(size=(b, d)), requires_grad=True),
            Tensor(rng.uniform(0.5, 1.5, size=(b, d)), requires_grad=True),
            1e-4,
        )
        for _ in range(n)
    ]


def test_min_mi_loss_routes_gradient_to_latents_only():
    posts = _posteriors(3, 2, 4)
    latents = _latents(3, 2, 4)
    min_mi_loss(posts, latents).backward()
    assert all(p.mu.grad is None and p.sigma.grad is None for p in posts)
    assert all(z.grad is not None and np.abs(z.grad).sum() > 0 for z in latents)


def test_approx_loss_routes_gradient_to_posteriors_only():
    posts = _posteriors(3, 2, 4)
    latents = _latents(3, 2, 4)
    approx_loss(posts, latents).backward()
    assert all(z.grad is None for z in latents)
    assert all(np.abs(p.mu.grad).sum() > 0 for p in posts)


def test_min_mi_loss_zero_when_latents_match_across_masks():
    with precision(np.float64):
        posts = _posteriors(3, 2, 4)
        z = np.random.default_rng(9).normal(size=(2, 4))
        latents = [Tensor(z) for _ in range(3)]
        assert min_mi_loss(posts, latents).item() == pytest.approx(0.0, abs=1e-12)


def test_min_mi_loss_gradient_check():
    with precision(np.float64):
        posts = _posteriors(2, 3, 2)

    def f(t: Tensor) -> Tensor:
        return min_mi_loss(posts, [t[0:3], t[3:6]])

    report = grad_check(f, np.random.default_rng(5).normal(size=(6, 2)))
    assert report.passed, report


def _parts(**values):
    return LossParts(**{k: Tensor(v, requires_grad=True) for k, v in values.items()})


def test_combined_loss_gate_closed_is_rec_only():
    parts = _parts(rec=2.0, max_mi=3.0, min_mi=4.0, approx=5.0)
    weights = LossWeights(lambda1=1.5, lambda2=1.0, lambda3=10.0)
    total, report = combined_loss(parts, weights, gate_open=False)
    assert total.item() == pytest.approx(3.0)
    assert report.total == pytest.approx(3.0)
    assert report.approx == 5.0 and not report.gate_open
    total.backward()
    assert parts.max_mi.grad is None and parts.approx.grad is None


def test_combined_loss_gate_open_adds_mi_terms():
    parts = _parts(rec=2.0, max_mi=3.0, min_mi=0.5, approx=5.0)
    total, report = combined_loss(parts, LossWeights(lambda1=1.0, lambda2=2.0, lambda3=10.0), gate_open=True)
    assert total.item() == pytest.approx(2.0 + 6.0 + 5.0)
    assert report.gate_open


def test_combined_loss_rejects_non_finite_parts():
    parts = LossParts(rec=Tensor(1.0), max_mi=Tensor(1.0), min_mi=Tensor(1.0), approx=Tensor(1.0))
    parts.max_mi.data = np.array(np.nan, dtype=np.float32)
    with pytest.raises(ContractError):
        combined_loss(parts, LossWeights(), gate_open=True)


def test_info_nce_pair_far_negative_survives_float32():
    z = Tensor([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    value = info_nce_pair(z, 0, 1, tau=0.07)
    assert value.data.dtype == np.float32
    assert value.item() == pytest.approx(math.log1p(math.exp(-1 / 0.07)), rel=1e-4)
    assert value.item() > 0


def test_info_nce_pair_all_identical_is_log_of_denominator():
    nb = 5
    z = Tensor(np.ones((nb, 3)))
    assert info_nce_pair(z, 0, 3, tau=0.07).item() == pytest.approx(math.log(nb - 1), rel=1e-5)


def test_info_nce_pair_is_scale_invariant():
    with precision(np.float64):
        z = np.random.default_rng(2).normal(size=(6, 4))
        scales = np.array([[0.1], [3.0], [7.0], [0.5], [2.0], [11.0]])
        plain = info_nce_pair(Tensor(z), 1, 4, 0.2).item()
        scaled = info_nce_pair(Tensor(z * scales), 1, 4, 0.2).item()
    assert scaled == pytest.approx(plain, rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 2.0))
def test_info_nce_pair_is_non_negative(seed, tau):
    z = Tensor(np.random.default_rng(seed).normal(size=(6, 3)))
    assert info_nce_pair(z, 0, 2, tau).item() >= 0.0


def test_max_mi_loss_invariant_to_mask_order():
    with precision(np.float64):
        latents = _latents(4, 3, 5, seed=6)
        forward = max_mi_loss(latents, 0.1).item()
        shuffled = max_mi_loss([latents[i] for i in (2, 0, 3, 1)], 0.1).item()
    assert shuffled == pytest.approx(forward, rel=1e-12)


def test_max_mi_loss_all_identical():
    n, b = 4, 3
    latents = [Tensor(np.ones((b, 2))) for _ in range(n)]
    expected = (n * (n - 1) / n**2) * math.log(n * b - 1)
    assert max_mi_loss(latents, 0.07).item() == pytest.approx(expected, rel=1e-5)


def test_min_mi_loss_single_mask_is_zero():
    posts = _posteriors(1, 3, 2)
    assert min_mi_loss(posts, _latents(1, 3, 2)).item() == pytest.approx(0.0, abs=1e-7)


def test_min_mi_loss_two_masks_by_hand():
    # q1 = N(0, 1), q2 = N(1, 4); z1 = 0.5, z2 = -1
    # l1 = ½[log q1(z1) − log q1(z2)] = 0.1875; l2 = ½[log q2(z2) − log q2(z1)] = −0.234375
    with precision(np.float64):
        posts = [
            GaussianPosterior(Tensor([[0.0]]), Tensor([[1.0]]), 1e-4),
            GaussianPosterior(Tensor([[1.0]]), Tensor([[2.0]]), 1e-4),
        ]
        value = min_mi_loss(posts, [Tensor([[0.5]]), Tensor([[-1.0]])]).item()
    assert value == pytest.approx(-0.0234375, rel=1e-12)


def test_approx_loss_unit_gaussian_at_mean():
    z = np.random.default_rng(3).normal(size=(4, 1))
    post = GaussianPosterior(Tensor(z), Tensor(np.ones((4, 1))), 1e-4)
    assert approx_loss([post], [Tensor(z)]).item() == pytest.approx(0.5 * math.log(2 * math.pi), rel=1e-5)


def test_approx_loss_decreases_as_mean_approaches_latent():
    with precision(np.float64):
        z = Tensor(np.random.default_rng(4).normal(size=(3, 2)))
        values = [
            approx_loss([GaussianPosterior(z + shift, Tensor(np.ones((3, 2))), 1e-4)], [z]).item()
            for shift in (2.0, 1.0, 0.5, 0.0)
        ]
    assert values == sorted(values, reverse=True)
    assert values[-1] < values[0]


def test_combined_loss_default_weights_examples():
    open_total, _ = combined_loss(_parts(rec=0.4, max_mi=0.2, min_mi=0.01, approx=1.0), LossWeights(), gate_open=True)
    assert open_total.item() == pytest.approx(0.7, rel=1e-6)
    closed_total, _ = combined_loss(_parts(rec=0.7, max_mi=5.0, min_mi=5.0, approx=1.0), LossWeights(), gate_open=False)
    assert closed_total.item() == pytest.approx(0.7, rel=1e-6)
