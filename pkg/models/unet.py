"""
U-Net backbone and the contracting encoders of the prior and posterior nets.

The backbone returns the penultimate feature map x̃ (``base_channels``
channels at input resolution); the task-specific 1×1 heads live with the
models that own them.
"""

from typing import Optional

import numpy as np

from common.errors import InvalidArgumentError
from engine import ops
from engine.tensor import Tensor
from gaussian.stats import DiagonalGaussian
from models.config import LatentSpec, UNetConfig
from models.layers import ModelParams, ParamInitializer, conv_block, linear


def check_extents(x: Tensor, cfg: UNetConfig) -> None:
    """Input must be (N, C, *spatial) with spatial extents divisible by 2^depth"""
    if x.ndim != cfg.spatial_dims + 2:
        raise InvalidArgumentError(
            f"expected a (N, C) + {cfg.spatial_dims}-D input, got shape {x.shape}"
        )
    multiple = cfg.required_multiple
    bad = [s for s in x.shape[2:] if s % multiple]
    if bad:
        raise InvalidArgumentError(
            f"spatial extents {x.shape[2:]} must be multiples of {multiple} for depth {cfg.depth}"
        )


def init_unet(init: ParamInitializer, cfg: UNetConfig, prefix: str = "unet") -> None:
    channels = cfg.in_channels
    for level in range(cfg.depth):
        init.block(f"{prefix}.down{level}", channels, cfg.level_channels(level))
        channels = cfg.level_channels(level)
    init.block(f"{prefix}.bottom", channels, cfg.level_channels(cfg.depth))
    for level in reversed(range(cfg.depth)):
        wide = cfg.level_channels(level + 1)
        narrow = cfg.level_channels(level)
        init.transposed(f"{prefix}.up{level}", wide, narrow)
        init.block(f"{prefix}.dec{level}", 2 * narrow, narrow)


def unet_forward(
    x: Tensor,
    params: ModelParams,
    cfg: UNetConfig,
    rng: Optional[np.random.Generator] = None,
    dropout_active: bool = False,
    prefix: str = "unet",
) -> Tensor:
    """
    Encoder-decoder pass producing x̃.

    Args:
        x: (N, C_in, *spatial) input
        params: Model parameters holding the ``prefix`` layers
        cfg: Backbone configuration
        rng: Generator for spatial dropout; required when dropout is active
        dropout_active: Apply spatial dropout after every block

    Returns:
        (N, base_channels, *spatial) feature map
    """
    check_extents(x, cfg)
    use_dropout = dropout_active and cfg.dropout_rate > 0
    if use_dropout and rng is None:
        raise InvalidArgumentError("active dropout needs a random generator")

    def dropout(h: Tensor) -> Tensor:
        return ops.spatial_dropout(h, cfg.dropout_rate, rng, active=use_dropout) if use_dropout else h

    skips = []
    h = x
    for level in range(cfg.depth):
        h = dropout(conv_block(params, f"{prefix}.down{level}", h))
        skips.append(h)
        h = ops.avg_pool2d(h)
    h = dropout(conv_block(params, f"{prefix}.bottom", h))
    for level in reversed(range(cfg.depth)):
        up = ops.transposed_conv2d(h, params[f"{prefix}.up{level}.weight"], params[f"{prefix}.up{level}.bias"])
        h = dropout(conv_block(params, f"{prefix}.dec{level}", ops.concat_channels([up, skips[level]])))
    return h


def init_encoder(
    init: ParamInitializer,
    cfg: UNetConfig,
    latent: LatentSpec,
    in_channels: int,
    prefix: str,
) -> None:
    channels = in_channels
    for level in range(cfg.depth):
        init.block(f"{prefix}.down{level}", channels, cfg.level_channels(level))
        channels = cfg.level_channels(level)
    init.block(f"{prefix}.bottom", channels, cfg.level_channels(cfg.depth))
    width = cfg.level_channels(cfg.depth)
    init.linear(f"{prefix}.mu", width, latent.dim)
    init.linear(f"{prefix}.log_sigma", width, latent.dim)


def encoder_forward(x: Tensor, params: ModelParams, cfg: UNetConfig, prefix: str) -> DiagonalGaussian:
    """Contracting path, global average pooling, then linear μ and log σ heads"""
    h = x
    for level in range(cfg.depth):
        h = ops.avg_pool2d(conv_block(params, f"{prefix}.down{level}", h))
    h = ops.global_avg_pool(conv_block(params, f"{prefix}.bottom", h))
    mu = linear(params, f"{prefix}.mu", h)
    log_sigma = linear(params, f"{prefix}.log_sigma", h)
    return DiagonalGaussian.from_log_sigma(mu, log_sigma)
