"""Gaussian laws, moments and closed-form distances."""
from .stats import (
    DiagonalGaussian,
    GaussianMoments,
    LowRankGaussian,
    kl_diag,
    sample_diag,
    empirical_moments,
    matrix_sqrt_psd,
    frechet_distance,
    frechet_loss,
)

__all__ = [
    "DiagonalGaussian",
    "GaussianMoments",
    "LowRankGaussian",
    "kl_diag",
    "sample_diag",
    "empirical_moments",
    "matrix_sqrt_psd",
    "frechet_distance",
    "frechet_loss",
]
