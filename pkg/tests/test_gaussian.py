"""Tests for diagonal KL, moments, PSD square roots and the Fréchet distance"""
import numpy as np
import pytest

from common.errors import InsufficientSamplesError, InvalidArgumentError
from engine import Tensor, backward, grad_check, ops
from gaussian import (
    DiagonalGaussian,
    GaussianMoments,
    LowRankGaussian,
    empirical_moments,
    frechet_distance,
    frechet_loss,
    kl_diag,
    matrix_sqrt_psd,
    sample_diag,
)


def gaussian(mu, sigma):
    return DiagonalGaussian(Tensor(np.asarray(mu, float)), Tensor(np.asarray(sigma, float)))


# === KL ===

def test_kl_closed_forms():
    assert kl_diag(gaussian([0.3, -1.0], [0.5, 2.0]), gaussian([0.3, -1.0], [0.5, 2.0])).item() == pytest.approx(0.0, abs=1e-15)
    assert kl_diag(gaussian([1.0], [1.0]), gaussian([0.0], [1.0])).item() == pytest.approx(0.5, abs=1e-12)
    assert kl_diag(gaussian([0.0], [2.0]), gaussian([0.0], [1.0])).item() == pytest.approx(2 - 0.5 - np.log(2), abs=1e-12)


def test_kl_nonnegative_on_random_pairs(rng):
    for _ in range(100):
        q = gaussian(rng.normal(size=3), np.exp(rng.normal(size=3)))
        p = gaussian(rng.normal(size=3), np.exp(rng.normal(size=3)))
        assert kl_diag(q, p).item() > 0


def test_kl_is_batched_over_leading_axes(rng):
    q = gaussian(rng.normal(size=(4, 3)), np.ones((4, 3)))
    p = gaussian(np.zeros((4, 3)), np.ones((4, 3)))
    out = kl_diag(q, p)
    assert out.shape == (4,)
    np.testing.assert_allclose(out.data, 0.5 * np.sum(q.mu.data ** 2, axis=1))


def test_kl_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        kl_diag(gaussian([0.0], [1.0]), gaussian([0.0, 0.0], [1.0, 1.0]))


def test_kl_gradient_in_means(rng):
    p = gaussian(rng.normal(size=3), np.exp(rng.normal(size=3)))
    sigma_q = np.exp(rng.normal(size=3))
    f = lambda mu: kl_diag(DiagonalGaussian(mu, Tensor(sigma_q)), p)
    assert grad_check(f, Tensor(rng.normal(size=3))) < 1e-4


def test_log_sigma_is_clamped():
    g = DiagonalGaussian.from_log_sigma(Tensor([0.0, 0.0]), Tensor([50.0, 0.0]))
    np.testing.assert_allclose(g.sigma.data, [np.exp(10.0), 1.0])


# === Moments ===

def test_moments_closed_forms():
    same = empirical_moments(np.ones((3, 2)))
    np.testing.assert_array_equal(same.cov, np.zeros((2, 2)))
    two = empirical_moments(np.array([[0.0], [2.0]]))
    assert two.mu[0] == 1.0 and two.cov[0, 0] == 2.0


def test_moments_monte_carlo():
    rng = np.random.default_rng(0)
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    samples = rng.multivariate_normal([1.0, -3.0], cov, size=10_000)
    m = empirical_moments(samples)
    np.testing.assert_allclose(m.mu, [1.0, -3.0], rtol=0.05)
    np.testing.assert_allclose(m.cov, cov, rtol=0.05, atol=0.05)


def test_moments_need_two_samples():
    with pytest.raises(InsufficientSamplesError):
        empirical_moments(np.ones((1, 3)))


# === Square root ===

def test_sqrt_closed_forms():
    np.testing.assert_allclose(matrix_sqrt_psd(np.eye(3)), np.eye(3), atol=1e-12)
    np.testing.assert_allclose(matrix_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-12)


@pytest.mark.parametrize("condition", [1.0, 1e3, 1e6])
def test_sqrt_reconstructs_input(condition, rng):
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    s = (q * np.geomspace(1.0, 1.0 / condition, 5)) @ q.T
    s = 0.5 * (s + s.T)
    r = matrix_sqrt_psd(s)
    assert np.linalg.norm(r @ r - s) <= 1e-8 * (1 + np.linalg.norm(s))


def test_sqrt_of_gram_matrix(rng):
    a = rng.normal(size=(4, 4))
    s = a.T @ a
    r = matrix_sqrt_psd(s)
    assert np.linalg.norm(r @ r - s) <= 1e-8 * (1 + np.linalg.norm(s))


def test_sqrt_rejects_asymmetric():
    with pytest.raises(InvalidArgumentError):
        matrix_sqrt_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))


# === Fréchet ===

def test_frechet_closed_forms():
    m = GaussianMoments(np.array([0.2, 0.1]), np.array([[1.0, 0.3], [0.3, 2.0]]))
    assert frechet_distance(m, m) == pytest.approx(0.0, abs=1e-9)
    shifted = frechet_distance(GaussianMoments(np.zeros(2), np.eye(2)), GaussianMoments(np.array([3.0, 4.0]), np.eye(2)))
    assert shifted == pytest.approx(25.0, abs=1e-9)
    scaled = frechet_distance(GaussianMoments(np.zeros(1), np.eye(1)), GaussianMoments(np.zeros(1), 9 * np.eye(1)))
    assert scaled == pytest.approx(4.0, abs=1e-9)


def test_frechet_is_symmetric(rng):
    a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    m1 = GaussianMoments(rng.normal(size=3), a @ a.T)
    m2 = GaussianMoments(rng.normal(size=3), b @ b.T)
    assert frechet_distance(m1, m2) == pytest.approx(frechet_distance(m2, m1), rel=1e-8)


def test_frechet_commuting_covariances():
    m1 = GaussianMoments(np.array([1.0, 0.0]), np.diag([1.0, 4.0]))
    m2 = GaussianMoments(np.array([0.0, 2.0]), np.diag([9.0, 1.0]))
    expected = 1.0 + 4.0 + (1.0 - 3.0) ** 2 + (2.0 - 1.0) ** 2
    assert frechet_distance(m1, m2) == pytest.approx(expected, abs=1e-9)


def test_frechet_loss_reports_full_value(rng):
    preds = rng.random((6, 3))
    targets = rng.random((5, 3))
    loss = frechet_loss(Tensor(preds), targets)
    assert loss.item() == pytest.approx(
        frechet_distance(empirical_moments(preds), empirical_moments(targets)), abs=1e-9
    )


def test_frechet_loss_gradient_in_diagonal_mode(rng):
    targets = rng.random((3, 4))
    f = lambda p: frechet_loss(p, targets, exact_value=False)
    assert grad_check(f, Tensor(rng.random((3, 4)))) < 1e-4


def test_frechet_loss_mean_gradient_matches_full_distance(rng):
    preds = rng.random((5, 2))
    targets = rng.random((5, 2))
    x = Tensor(preds, requires_grad=True)
    backward(frechet_loss(x, targets))
    # shifting every sample moves only the mean term: d/dμ ‖μ − μ̂‖² = 2(μ − μ̂)
    expected = 2.0 * (preds.mean(axis=0) - targets.mean(axis=0))
    np.testing.assert_allclose(x.grad.sum(axis=0), expected, atol=1e-10)


# === Sampling ===

def test_sample_diag_small_sigma_returns_mean(rng):
    z, eps = sample_diag(gaussian([1.0, 2.0], [1e-12, 1e-12]), rng)
    np.testing.assert_allclose(z.data, [1.0, 2.0], atol=1e-10)
    assert eps.shape == (2,)


def test_sample_diag_is_reproducible():
    g = gaussian([0.0, 1.0], [1.0, 2.0])
    z1, _ = sample_diag(g, np.random.default_rng(3))
    z2, _ = sample_diag(g, np.random.default_rng(3))
    np.testing.assert_array_equal(z1.data, z2.data)


def test_sample_diag_monte_carlo():
    g = gaussian(np.full(100_000, 1.5), np.full(100_000, 0.5))
    z, _ = sample_diag(g, np.random.default_rng(0))
    assert z.data.mean() == pytest.approx(1.5, rel=0.02)
    assert z.data.std() == pytest.approx(0.5, rel=0.02)


def test_sample_diag_gradient_reaches_parameters(rng):
    mu = Tensor([0.0, 0.0], requires_grad=True)
    sigma = Tensor([1.0, 2.0], requires_grad=True)
    z, eps = sample_diag(DiagonalGaussian(mu, sigma), rng)
    backward(ops.sum(z))
    np.testing.assert_array_equal(mu.grad, [1.0, 1.0])
    np.testing.assert_allclose(sigma.grad, eps)


def test_low_rank_sample_covariance():
    rng = np.random.default_rng(0)
    v, r = 6, 2
    factor = rng.normal(size=(1, v, r))
    diag = rng.random((1, v)) + 0.5
    law = LowRankGaussian(Tensor(np.zeros((1, v))), Tensor(factor), Tensor(diag))
    draws = np.stack([law.sample(rng).data[0] for _ in range(10_000)])
    empirical = np.cov(draws, rowvar=False)
    target = law.covariance(0)
    assert np.linalg.norm(empirical - target) <= 0.1 * np.linalg.norm(target)
