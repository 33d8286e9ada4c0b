"""MC-Dropout baseline: a U-Net whose spatial dropout stays on at inference."""

from dataclasses import replace

import numpy as np

from common.errors import InvalidArgumentError
from engine.tensor import Tensor, no_grad
from models.config import UNetConfig
from models.layers import ModelParams, ParamInitializer
from models.losses import cross_entropy_loss
from models.prob_unet import apply_head, init_head, segmentation_probability
from models.unet import init_unet, unet_forward

DEFAULT_RATE = 0.3


def init_params(cfg: UNetConfig, rng: np.random.Generator) -> ModelParams:
    params = ModelParams()
    init = ParamInitializer(params, rng, cfg.spatial_dims)
    init_unet(init, cfg)
    init_head(init, cfg, extra_channels=0)
    return params


def mcdo_probability(
    x: Tensor,
    params: ModelParams,
    cfg: UNetConfig,
    rng: np.random.Generator = None,
    active: bool = True,
) -> Tensor:
    features = unet_forward(x, params, cfg, rng=rng, dropout_active=active)
    return segmentation_probability(apply_head(features, params, cfg))


def mcdo_loss(x: Tensor, y: np.ndarray, params: ModelParams, cfg: UNetConfig, rng: np.random.Generator) -> Tensor:
    """Cross-entropy of one dropout-perturbed pass per (image, annotation) pair"""
    prob = mcdo_probability(x, params, cfg, rng, active=True)
    return cross_entropy_loss(prob, np.asarray(y, dtype=np.float64).reshape(prob.shape))


def mcdo_sample(
    x: Tensor,
    params: ModelParams,
    cfg: UNetConfig,
    rate: float,
    m: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    M stochastic forward passes with dropout active.

    Args:
        x: (N, C, *spatial) images
        params: Model parameters
        cfg: Backbone configuration
        rate: Dropout probability in (0, 1)
        m: Number of passes
        rng: Generator for the dropout masks

    Returns:
        (M, N, *spatial) probability maps
    """
    if not 0.0 < rate < 1.0:
        raise InvalidArgumentError(f"dropout rate must lie in (0, 1), got {rate}")
    if rate != cfg.dropout_rate:
        cfg = replace(cfg, dropout_rate=rate)
    with no_grad():
        return np.stack([mcdo_probability(x, params, cfg, rng, active=True).numpy() for _ in range(m)])


def mcdo_mean_map(x: Tensor, params: ModelParams, cfg: UNetConfig) -> np.ndarray:
    """Dropout-free pass"""
    with no_grad():
        return mcdo_probability(x, params, cfg, active=False).numpy()
