"""
Distributional reconstruction loss for the conditional-VAE.

For one image the model draws M latents from the posterior, each conditioned
on one of the R annotations, and turns them into M probability maps. The maps
and the annotations are average-pooled to a coarse grid, flattened, and
compared as two uniform point clouds (one point per segmentation) with a
debiased Sinkhorn divergence, a Hausdorff divergence or a Fréchet distance.
The β-weighted KL between posterior and prior is added as in the ELBO.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from common.errors import InsufficientAnnotationsError, InvalidArgumentError
from engine import ops
from engine.tensor import Tensor
from gaussian.stats import DiagonalGaussian, frechet_loss, kl_diag, sample_diag
from models.config import LossKind, LossSpec, UNetConfig
from models.layers import ModelParams, pool_array_to_limit, pool_to_limit
from models.prob_unet import head_logits, posterior_forward, prior_forward, segmentation_probability
from models.unet import unet_forward
from transport.divergences import divergence
from transport.measures import DiscreteMeasure
from transport.sinkhorn import SinkhornConfig

logger = logging.getLogger(__name__)

# Largest pooled extent per spatial dimensionality
OT_POOL_LIMIT = {2: 16, 3: 8}
FRECHET_POOL_LIMIT = {2: 8, 3: 4}


def pool_limit(kind: LossKind, spatial_dims: int) -> int:
    table = FRECHET_POOL_LIMIT if kind is LossKind.FRECHET else OT_POOL_LIMIT
    return table[spatial_dims]


def conditioning_indices(spec: LossSpec, n_annotations: int, rng: np.random.Generator) -> List[int]:
    """Annotation index conditioning each latent draw"""
    if spec.conditioning == "fixed":
        return [m % n_annotations for m in range(spec.m_samples)]
    return [int(r) for r in rng.integers(0, n_annotations, size=spec.m_samples)]


def flatten_predictions(prob: Tensor, limit: int) -> Tensor:
    """(M, *spatial) probabilities → (M, v) pooled points"""
    m = prob.shape[0]
    pooled = pool_to_limit(ops.reshape(prob, (m, 1) + prob.shape[1:]), limit)
    return ops.reshape(pooled, (m, int(np.prod(pooled.shape[1:]))))


def flatten_annotations(ys: np.ndarray, limit: int) -> np.ndarray:
    """(R, *spatial) masks → (R, v) pooled points"""
    pooled = pool_array_to_limit(np.asarray(ys, dtype=np.float64), limit)
    return pooled.reshape(pooled.shape[0], -1)


def distribution_distance(
    predictions: Tensor,
    annotations: np.ndarray,
    spec: LossSpec,
    sinkhorn_cfg: SinkhornConfig,
) -> Tensor:
    """D(α, β) between uniform clouds of flattened predictions and annotations"""
    if spec.kind is LossKind.FRECHET:
        return frechet_loss(predictions, annotations, exact_value=spec.frechet_exact_value)
    alpha = DiscreteMeasure.uniform(predictions)
    beta = DiscreteMeasure.uniform(annotations)
    return divergence(spec.kind.value, alpha, beta, sinkhorn_cfg)


def draw_predictions(
    x: Tensor,
    ys: np.ndarray,
    params: ModelParams,
    cfg: UNetConfig,
    spec: LossSpec,
    rng: np.random.Generator,
) -> Tuple[Tensor, DiagonalGaussian, DiagonalGaussian]:
    """
    M posterior-driven probability maps for one image.

    Returns:
        (M, *spatial) probabilities, the (M, D) posterior and the (M, D) prior
        broadcast to match it
    """
    m = spec.m_samples
    indices = conditioning_indices(spec, ys.shape[0], rng)

    images = ops.broadcast_to(x, (m,) + x.shape[1:])
    posterior = posterior_forward(images, ys[indices], params, cfg)
    prior_one = prior_forward(x, params, cfg)
    prior = DiagonalGaussian(
        ops.broadcast_to(prior_one.mu, posterior.mu.shape),
        ops.broadcast_to(prior_one.sigma, posterior.sigma.shape),
    )

    features = unet_forward(x, params, cfg)
    features = ops.broadcast_to(features, (m,) + features.shape[1:])
    z, _ = sample_diag(posterior, rng)
    prob = segmentation_probability(head_logits(features, z, params, cfg))
    return prob, posterior, prior


def pulaski_loss(
    x: Tensor,
    ys: np.ndarray,
    params: ModelParams,
    cfg: UNetConfig,
    spec: LossSpec,
    sinkhorn_cfg: SinkhornConfig,
    rng: np.random.Generator,
) -> Tensor:
    """
    D(p(y|x), p_θ(y|x, z)) + β·KL for one image and its R annotations.

    Args:
        x: (1, C, *spatial) image
        ys: (R, *spatial) binary annotations
        params: Model parameters
        cfg: Backbone configuration
        spec: Loss configuration with a distributional kind
        sinkhorn_cfg: Solver settings for the OT divergences
        rng: Generator for conditioning indices and latent draws

    Returns:
        Scalar loss
    """
    if not spec.kind.is_distributional:
        raise InvalidArgumentError(f"pulaski_loss needs SINKHORN, HAUSDORFF or FRECHET, got {spec.kind.value}")
    ys = np.asarray(ys, dtype=np.float64)
    if x.shape[0] != 1:
        raise InvalidArgumentError(f"pulaski_loss takes one image, got a batch of {x.shape[0]}")
    if ys.ndim != x.ndim - 1 or ys.shape[1:] != x.shape[2:]:
        raise InvalidArgumentError(f"annotations {ys.shape} do not match image {x.shape}")
    if ys.shape[0] < 2:
        raise InsufficientAnnotationsError(f"need at least 2 annotations, got {ys.shape[0]}")

    prob, posterior, prior = draw_predictions(x, ys, params, cfg, spec, rng)

    limit = pool_limit(spec.kind, cfg.spatial_dims)
    distance = distribution_distance(
        flatten_predictions(prob, limit),
        flatten_annotations(ys, limit),
        spec,
        sinkhorn_cfg,
    )
    return distance + spec.beta * ops.mean(kl_diag(posterior, prior))


def batch_pulaski_loss(
    images: Tensor,
    annotations: np.ndarray,
    params: ModelParams,
    cfg: UNetConfig,
    spec: LossSpec,
    sinkhorn_cfg: SinkhornConfig,
    rng: np.random.Generator,
) -> Tensor:
    """Mean of ``pulaski_loss`` over (B, C, *spatial) images with (B, R, *spatial) annotations"""
    total: Optional[Tensor] = None
    for b in range(images.shape[0]):
        image = ops.take(images, [b], axis=0)
        term = pulaski_loss(image, annotations[b], params, cfg, spec, sinkhorn_cfg, rng)
        total = term if total is None else total + term
    return total / float(images.shape[0])
