"""
Stochastic segmentation network head on the shared backbone.

Three 1×1 heads give the mean logits, a positive diagonal and a rank-R
covariance factor of a Gaussian over all logits of an image. Training
minimises −log (1/M) Σₘ Πᵢⱼ p_ηᵐ(cᵢⱼ = yᵢⱼ) in log-sum-exp form.
"""

import logging

import numpy as np

from engine import ops
from engine.tensor import Tensor, no_grad
from gaussian.stats import LowRankGaussian
from models.config import UNetConfig
from models.layers import ModelParams, ParamInitializer, conv
from models.losses import pixel_log_likelihood
from models.prob_unet import logit_gap, segmentation_probability
from models.unet import init_unet, unet_forward

logger = logging.getLogger(__name__)

DIAG_FLOOR = 1e-4


def init_params(cfg: UNetConfig, rank: int, rng: np.random.Generator) -> ModelParams:
    params = ModelParams()
    init = ParamInitializer(params, rng, cfg.spatial_dims)
    init_unet(init, cfg)
    init.conv("ssn.mu", cfg.base_channels, cfg.n_classes, kernel_size=1)
    init.conv("ssn.diag", cfg.base_channels, cfg.n_classes, kernel_size=1)
    init.conv("ssn.factor", cfg.base_channels, rank * cfg.n_classes, kernel_size=1)
    return params


def ssn_forward(x: Tensor, params: ModelParams, cfg: UNetConfig, rank: int) -> LowRankGaussian:
    """
    Low-rank Gaussian over the flattened (K, *spatial) logits of each image.

    Args:
        x: (N, C, *spatial) images
        params: Model parameters
        cfg: Backbone configuration
        rank: Covariance factor rank R

    Returns:
        LowRankGaussian with v = K·∏spatial
    """
    features = unet_forward(x, params, cfg)
    n = x.shape[0]
    v = cfg.n_classes * int(np.prod(x.shape[2:]))
    mu = ops.reshape(conv(params, "ssn.mu", features), (n, v))
    diag = ops.reshape(ops.softplus(conv(params, "ssn.diag", features)) + DIAG_FLOOR, (n, v))
    factor = ops.reshape(conv(params, "ssn.factor", features), (n, rank, v))
    return LowRankGaussian(mu, ops.transpose(factor, (0, 2, 1)), diag)


def _as_logits(flat: Tensor, x: Tensor, cfg: UNetConfig) -> Tensor:
    return ops.reshape(flat, (x.shape[0], cfg.n_classes) + x.shape[2:])


def ssn_loss(
    x: Tensor,
    y: np.ndarray,
    params: ModelParams,
    cfg: UNetConfig,
    rank: int,
    m: int,
    rng: np.random.Generator,
) -> Tensor:
    """
    Marginal negative log-likelihood, averaged over the images of the batch.

    Args:
        x: (N, C, *spatial) images
        y: (N, *spatial) binary masks
        params: Model parameters
        cfg: Backbone configuration
        rank: Covariance factor rank
        m: Logit samples per image
        rng: Generator for the logit draws

    Returns:
        Scalar loss
    """
    y = np.asarray(y, dtype=np.float64)
    law = ssn_forward(x, params, cfg, rank)
    n = x.shape[0]
    columns = []
    for _ in range(m):
        eta = _as_logits(law.sample(rng), x, cfg)
        log_lik = ops.sum(pixel_log_likelihood(logit_gap(eta), y.reshape((n,) + x.shape[2:])),
                          axis=tuple(range(1, x.ndim - 1)))
        columns.append(ops.reshape(log_lik, (n, 1)))
    stacked = ops.concat_channels(columns)
    nll = float(np.log(m)) - ops.logsumexp(stacked, axis=1)
    return ops.mean(nll)


def ssn_sample(
    x: Tensor,
    params: ModelParams,
    cfg: UNetConfig,
    rank: int,
    m: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """(M, N, *spatial) probability maps from logit samples"""
    with no_grad():
        law = ssn_forward(x, params, cfg, rank)
        return np.stack([
            segmentation_probability(_as_logits(law.sample(rng), x, cfg)).numpy()
            for _ in range(m)
        ])


def ssn_mean_map(x: Tensor, params: ModelParams, cfg: UNetConfig, rank: int) -> np.ndarray:
    """Probability map of the mean logits"""
    with no_grad():
        law = ssn_forward(x, params, cfg, rank)
        return segmentation_probability(_as_logits(law.mu, x, cfg)).numpy()
