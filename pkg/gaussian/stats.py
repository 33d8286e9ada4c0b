"""
Closed-form Gaussian machinery.

Latent laws are diagonal Gaussians over tensors so the ELBO regulariser
differentiates through encoder outputs. Moment estimation, PSD square roots
and the Fréchet distance work on plain arrays; ``frechet_loss`` bridges the two
by differentiating a diagonal-covariance form of the distance.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from common.errors import InsufficientSamplesError, InvalidArgumentError
from engine import ops
from engine.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

LOG_SIGMA_BOUND = 10.0
SYMMETRY_TOLERANCE = 1e-6
COVARIANCE_SHRINKAGE = 1e-6
NEGATIVE_EIGEN_TOLERANCE = 1e-10

_experimental_warned = False


@dataclass(frozen=True)
class DiagonalGaussian:
    """N(μ, diag(σ²)) over the last axis; leading axes index a batch"""
    mu: Tensor
    sigma: Tensor

    def __post_init__(self):
        mu, sigma = as_tensor(self.mu), as_tensor(self.sigma)
        if mu.shape != sigma.shape:
            raise InvalidArgumentError(f"mu {mu.shape} and sigma {sigma.shape} differ in shape")
        if not np.all(sigma.data > 0):
            raise InvalidArgumentError("sigma entries must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def from_log_sigma(cls, mu: Tensor, log_sigma: Tensor) -> "DiagonalGaussian":
        """σ = exp(clamp(log σ, −10, 10))"""
        clamped = ops.clamp(log_sigma, -LOG_SIGMA_BOUND, LOG_SIGMA_BOUND)
        return cls(mu, ops.exp(clamped))

    @property
    def dim(self) -> int:
        return self.mu.shape[-1]

    def row(self, index: int) -> "DiagonalGaussian":
        """One member of a batched law"""
        return DiagonalGaussian(ops.take(self.mu, [index], axis=0), ops.take(self.sigma, [index], axis=0))


@dataclass(frozen=True)
class GaussianMoments:
    """Mean vector and symmetric PSD covariance"""
    mu: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if cov.shape != (mu.size, mu.size):
            raise InvalidArgumentError(f"covariance shape {cov.shape} does not match mean length {mu.size}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(cov), initial=0.0)):
            raise InvalidArgumentError("covariance is not symmetric")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mu.size

    def shrunk(self, amount: float) -> "GaussianMoments":
        return GaussianMoments(self.mu, self.cov + amount * np.eye(self.dim))


@dataclass(frozen=True)
class LowRankGaussian:
    """
    N(μ, PPᵀ + diag(D)) over flattened logits.

    Shapes: ``mu`` and ``diag`` are (B, v), ``factor`` is (B, v, R).
    """
    mu: Tensor
    factor: Tensor
    diag: Tensor

    def __post_init__(self):
        if self.factor.ndim != 3 or self.factor.shape[:2] != self.mu.shape or self.diag.shape != self.mu.shape:
            raise InvalidArgumentError(
                f"inconsistent low-rank shapes mu={self.mu.shape} factor={self.factor.shape} diag={self.diag.shape}"
            )

    @property
    def rank(self) -> int:
        return self.factor.shape[2]

    def covariance(self, index: int = 0) -> np.ndarray:
        p = self.factor.data[index]
        return p @ p.T + np.diag(self.diag.data[index])

    def sample(self, rng: np.random.Generator) -> Tensor:
        """η = μ + P ε₁ + √D ⊙ ε₂, reparameterised so gradients reach μ, P and D"""
        b, v, r = self.factor.shape
        eps_factor = rng.standard_normal((b, 1, r))
        eps_diag = rng.standard_normal((b, v))
        low_rank = ops.sum(ops.mul(self.factor, eps_factor), axis=2)
        return self.mu + low_rank + ops.pow(self.diag, 0.5) * eps_diag


def kl_diag(q: DiagonalGaussian, p: DiagonalGaussian) -> Tensor:
    """
    KL(q ‖ p) for diagonal Gaussians, summed over the last axis.

    Args:
        q: Approximate posterior
        p: Prior

    Returns:
        Tensor with the batch shape (a scalar for single vectors)
    """
    if q.mu.shape != p.mu.shape:
        raise InvalidArgumentError(f"dimension mismatch: {q.mu.shape} vs {p.mu.shape}")
    var_p = ops.square(p.sigma)
    shift = ops.square(q.mu - p.mu)
    terms = (
        ops.log(p.sigma) - ops.log(q.sigma)
        + (ops.square(q.sigma) + shift) / (2.0 * var_p)
        - 0.5
    )
    return ops.sum(terms, axis=-1)


def sample_diag(g: DiagonalGaussian, rng: np.random.Generator) -> Tuple[Tensor, np.ndarray]:
    """z = μ + σ ⊙ ε with ε standard normal; returns (z, ε)"""
    epsilon = rng.standard_normal(g.mu.shape)
    return g.mu + g.sigma * epsilon, epsilon


def empirical_moments(samples: np.ndarray) -> GaussianMoments:
    """
    Sample mean and unbiased covariance of the rows.

    Args:
        samples: M×v matrix

    Returns:
        GaussianMoments with symmetrised covariance
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidArgumentError(f"samples must be an M×v matrix, got shape {x.shape}")
    if x.shape[0] < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {x.shape[0]}")
    mu = x.mean(axis=0)
    centred = x - mu
    cov = centred.T @ centred / (x.shape[0] - 1)
    return GaussianMoments(mu, 0.5 * (cov + cov.T))


def matrix_sqrt_psd(s: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition, negative eigenvalues clamped to 0"""
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    if s.shape[0] != s.shape[1]:
        raise InvalidArgumentError(f"matrix must be square, got shape {s.shape}")
    if np.max(np.abs(s - s.T), initial=0.0) > SYMMETRY_TOLERANCE:
        raise InvalidArgumentError("matrix is not symmetric")
    values, vectors = linalg.eigh(0.5 * (s + s.T))
    root = np.sqrt(np.clip(values, 0.0, None))
    return (vectors * root) @ vectors.T


def frechet_distance(m1: GaussianMoments, m2: GaussianMoments) -> float:
    """
    ‖μ₁ − μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2}), clamped at 0.
    """
    if m1.dim != m2.dim:
        raise InvalidArgumentError(f"dimension mismatch: {m1.dim} vs {m2.dim}")
    root1 = matrix_sqrt_psd(m1.cov)
    inner = root1 @ m2.cov @ root1
    cross = matrix_sqrt_psd(0.5 * (inner + inner.T))
    diff = m1.mu - m2.mu
    value = diff @ diff + np.trace(m1.cov) + np.trace(m2.cov) - 2.0 * np.trace(cross)
    return max(float(value), 0.0)


def frechet_loss(predictions: Tensor, targets: np.ndarray, exact_value: bool = True) -> Tensor:
    """
    Fréchet distance between prediction and annotation feature sets.

    The gradient comes from ‖μ − μ̂‖² + Σ(σ_d − σ̂_d)², the diagonal-covariance
    form. With ``exact_value`` the returned value is the full distance.

    Args:
        predictions: M×v tensor of flattened prediction maps
        targets: R×v array of flattened annotations
        exact_value: Report the full-covariance value

    Returns:
        Scalar tensor
    """
    global _experimental_warned
    if not _experimental_warned:
        logger.warning("the Fréchet loss is experimental: its gradient ignores off-diagonal covariance")
        _experimental_warned = True

    targets = np.asarray(targets, dtype=np.float64)
    if predictions.ndim != 2 or targets.ndim != 2 or predictions.shape[1] != targets.shape[1]:
        raise InvalidArgumentError(f"feature shapes differ: {predictions.shape} vs {targets.shape}")
    m, v = predictions.shape
    r = targets.shape[0]
    if m < 2 or r < 2:
        raise InsufficientSamplesError(f"need at least 2 samples per side, got {m} and {r}")

    shrink = COVARIANCE_SHRINKAGE if min(m, r) <= v else 0.0
    # keeps d√var finite when a feature has no spread
    jitter = max(shrink, 1e-12)
    target_moments = empirical_moments(targets)
    target_sigma = np.sqrt(np.diag(target_moments.cov) + jitter)

    mean = ops.mean(predictions, axis=0)
    variance = ops.sum(ops.square(predictions - mean), axis=0) / float(m - 1)
    sigma = ops.pow(variance + jitter, 0.5)

    surrogate = ops.sum(ops.square(mean - target_moments.mu)) + ops.sum(ops.square(sigma - target_sigma))
    if not exact_value:
        return surrogate

    pred_moments = empirical_moments(predictions.data)
    value = frechet_distance(pred_moments.shrunk(shrink), target_moments.shrunk(shrink))
    return surrogate + (value - surrogate.item())
