"""
Conditional-VAE segmentation: backbone, prior/posterior nets and latent head.

Given an image x the backbone yields features x̃. A latent z, drawn from the
posterior q(z|x, y) during training or from the prior p(z|x) at inference, is
repeated over the spatial grid, concatenated to x̃ and mapped by 1×1
convolutions to K = 2 logit channels η. Foreground probabilities follow from
the sigmoid of η₁ − η₀.
"""

import logging
from typing import Optional

import numpy as np

from common.errors import InvalidArgumentError
from engine import ops
from engine.tensor import Tensor, as_tensor, no_grad
from gaussian.stats import DiagonalGaussian, kl_diag, sample_diag
from models.config import LatentSpec, LossKind, LossSpec, UNetConfig
from models.layers import ModelParams, ParamInitializer, conv, expand_latent
from models.losses import cross_entropy_loss, focal_tversky_loss
from models.unet import check_extents, encoder_forward, init_encoder, init_unet, unet_forward

logger = logging.getLogger(__name__)


def init_head(init: ParamInitializer, cfg: UNetConfig, extra_channels: int, prefix: str = "head") -> None:
    """``head_layers`` 1×1 convolutions from x̃ (plus ``extra_channels``) to K logits"""
    channels = cfg.base_channels + extra_channels
    for layer in range(cfg.head_layers - 1):
        init.conv(f"{prefix}.hidden{layer}", channels, cfg.base_channels, kernel_size=1)
        channels = cfg.base_channels
    init.conv(f"{prefix}.out", channels, cfg.n_classes, kernel_size=1)


def apply_head(features: Tensor, params: ModelParams, cfg: UNetConfig, prefix: str = "head") -> Tensor:
    h = features
    for layer in range(cfg.head_layers - 1):
        h = ops.relu(conv(params, f"{prefix}.hidden{layer}", h))
    return conv(params, f"{prefix}.out", h)


def init_params(cfg: UNetConfig, latent: LatentSpec, rng: np.random.Generator) -> ModelParams:
    """
    Parameters ψ, θ and φ of the probabilistic U-Net.

    Args:
        cfg: Backbone configuration
        latent: Latent size
        rng: Generator for the uniform initialisation

    Returns:
        ModelParams with ``unet``, ``prior``, ``posterior`` and ``head`` layers
    """
    params = ModelParams()
    init = ParamInitializer(params, rng, cfg.spatial_dims)
    init_unet(init, cfg)
    init_encoder(init, cfg, latent, cfg.in_channels, "prior")
    init_encoder(init, cfg, latent, cfg.in_channels + 1, "posterior")
    init_head(init, cfg, latent.dim)
    logger.debug(f"initialised probabilistic U-Net with {params.count()} weights")
    return params


def head_logits(features: Tensor, z: Tensor, params: ModelParams, cfg: UNetConfig) -> Tensor:
    """
    η = f₁ₓ₁([x̃; E(z)]).

    Args:
        features: (N, base_channels, *spatial) backbone output
        z: (N, D) latent samples
        params: Model parameters
        cfg: Backbone configuration

    Returns:
        (N, K, *spatial) logits
    """
    z = as_tensor(z)
    if z.ndim == 1:
        z = ops.reshape(z, (1, z.shape[0]))
    if z.shape[0] != features.shape[0]:
        raise InvalidArgumentError(f"{z.shape[0]} latents for {features.shape[0]} feature maps")
    latent_maps = expand_latent(z, features.shape[2:])
    return apply_head(ops.concat_channels([features, latent_maps]), params, cfg)


def _mask_channel(y: np.ndarray, x: Tensor) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape == x.shape[:1] + x.shape[2:]:
        y = y[:, None]
    if y.shape != (x.shape[0], 1) + x.shape[2:]:
        raise InvalidArgumentError(f"mask shape {y.shape} does not match image shape {x.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidArgumentError("mask values must be 0 or 1")
    return y


def prior_forward(x: Tensor, params: ModelParams, cfg: UNetConfig) -> DiagonalGaussian:
    check_extents(x, cfg)
    return encoder_forward(x, params, cfg, "prior")


def posterior_forward(x: Tensor, y: np.ndarray, params: ModelParams, cfg: UNetConfig) -> DiagonalGaussian:
    """Posterior net on the image with the mask as an extra input channel"""
    check_extents(x, cfg)
    joint = ops.concat_channels([x, _mask_channel(y, x)])
    return encoder_forward(joint, params, cfg, "posterior")


def segmentation_probability(logits: Tensor) -> Tensor:
    """
    Foreground probability σ(η₁ − η₀) per pixel.

    Args:
        logits: (N, 2, *spatial)

    Returns:
        (N, *spatial) probabilities
    """
    return ops.sigmoid(logit_gap(logits))


def logit_gap(logits: Tensor) -> Tensor:
    """η₁ − η₀ as (N, *spatial)"""
    if logits.ndim < 3 or logits.shape[1] != 2:
        raise InvalidArgumentError(f"only binary logits (N, 2, ...) are supported, got {logits.shape}")
    gap = ops.take(logits, [1], axis=1) - ops.take(logits, [0], axis=1)
    return ops.reshape(gap, logits.shape[:1] + logits.shape[2:])


def reconstruction_loss(prob: Tensor, y: np.ndarray, spec: LossSpec) -> Tensor:
    if spec.kind is LossKind.CE:
        return cross_entropy_loss(prob, y)
    if spec.kind is LossKind.FTL:
        return focal_tversky_loss(prob, y, spec.ftl_params, batched=True)
    raise InvalidArgumentError(f"pixelwise reconstruction does not support {spec.kind.value}")


def probunet_loss(
    x: Tensor,
    y: np.ndarray,
    params: ModelParams,
    cfg: UNetConfig,
    spec: LossSpec,
    rng: np.random.Generator,
) -> Tensor:
    """
    Negative ELBO over (image, annotation) pairs.

    Each pair draws ``spec.m_samples`` posterior latents; the reconstruction
    term (CE or FTL) is averaged over draws and β·KL(q ‖ p) over pairs.

    Args:
        x: (N, C, *spatial) images, one per pair
        y: (N, *spatial) binary masks
        params: Model parameters
        cfg: Backbone configuration
        spec: Loss configuration with kind CE or FTL
        rng: Generator for the latent draws

    Returns:
        Scalar loss
    """
    if spec.kind not in (LossKind.CE, LossKind.FTL):
        raise InvalidArgumentError(f"probunet_loss needs a CE or FTL loss, got {spec.kind.value}")
    y = np.asarray(y, dtype=np.float64)
    posterior = posterior_forward(x, y, params, cfg)
    prior = prior_forward(x, params, cfg)
    features = unet_forward(x, params, cfg)

    recon = None
    for _ in range(spec.m_samples):
        z, _ = sample_diag(posterior, rng)
        prob = segmentation_probability(head_logits(features, z, params, cfg))
        term = reconstruction_loss(prob, y.reshape(prob.shape), spec)
        recon = term if recon is None else recon + term
    recon = recon / float(spec.m_samples)
    return recon + spec.beta * ops.mean(kl_diag(posterior, prior))


def sample_from_prior(
    x: Tensor,
    params: ModelParams,
    cfg: UNetConfig,
    m: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    M plausible probability maps per image from prior latents.

    Returns:
        (M, N, *spatial) array in (0, 1)
    """
    with no_grad():
        prior = prior_forward(x, params, cfg)
        features = unet_forward(x, params, cfg)
        maps = []
        for _ in range(m):
            z, _ = sample_diag(prior, rng)
            maps.append(segmentation_probability(head_logits(features, z, params, cfg)).numpy())
    return np.stack(maps)


def most_probable_map(x: Tensor, params: ModelParams, cfg: UNetConfig) -> np.ndarray:
    """Probability map with the latent fixed at the prior mean"""
    with no_grad():
        prior = prior_forward(x, params, cfg)
        features = unet_forward(x, params, cfg)
        return segmentation_probability(head_logits(features, prior.mu, params, cfg)).numpy()
