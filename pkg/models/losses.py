"""Pixelwise reconstruction losses on foreground probability maps."""

from typing import Tuple

import numpy as np

from common.errors import InvalidArgumentError
from engine import ops
from engine.tensor import Tensor

PROB_CLAMP = 1e-7
FTL_SMOOTHING = 1.0


def _check(p: Tensor, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise InvalidArgumentError(f"prediction shape {p.shape} differs from mask shape {y.shape}")
    return y


def cross_entropy_loss(p: Tensor, y: np.ndarray) -> Tensor:
    """Mean over pixels of −[y log p + (1 − y) log(1 − p)], p clamped to [1e-7, 1 − 1e-7]"""
    y = _check(p, y)
    p = ops.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    per_pixel = ops.log(p) * y + ops.log(1.0 - p) * (1.0 - y)
    return -ops.mean(per_pixel)


def focal_tversky_loss(p: Tensor, y: np.ndarray, ftl_params: Tuple[float, float, float] = (0.7, 0.3, 4.0 / 3.0),
                       batched: bool = False) -> Tensor:
    """
    (1 − TI)^γ with TI = (TP + s) / (TP + α·FN + β·FP + s), s = 1.

    Args:
        p: Foreground probabilities
        y: Binary mask of the same shape
        ftl_params: (α_t, β_t, γ_t)
        batched: Compute one index per leading-axis sample and average the losses

    Returns:
        Scalar tensor
    """
    y = _check(p, y)
    alpha, beta, gamma = ftl_params
    axis = tuple(range(1, p.ndim)) if batched and p.ndim > 1 else None
    tp = ops.sum(p * y, axis=axis)
    fn = ops.sum((1.0 - p) * y, axis=axis)
    fp = ops.sum(p * (1.0 - y), axis=axis)
    index = (tp + FTL_SMOOTHING) / (tp + alpha * fn + beta * fp + FTL_SMOOTHING)
    base = ops.clamp(1.0 - index, 0.0, 1.0)
    return ops.mean(ops.pow(base, gamma))


def pixel_log_likelihood(logit_gap: Tensor, y: np.ndarray) -> Tensor:
    """log p(c = y) per pixel for β = η₁ − η₀, computed as −softplus((1 − 2y)·β)"""
    y = _check(logit_gap, y)
    return -ops.softplus(logit_gap * (1.0 - 2.0 * y))
