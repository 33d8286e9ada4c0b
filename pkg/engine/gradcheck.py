"""Central finite-difference check of reverse-mode gradients."""

import logging
from typing import Callable

import numpy as np

from common.errors import InvalidArgumentError, NumericError
from engine.tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)


def _evaluate(f: Callable[[Tensor], Tensor], data: np.ndarray) -> float:
    with no_grad():
        value = float(f(Tensor(data)).item())
    if not np.isfinite(value):
        raise NumericError(f"function is non-finite at a probe point: {value}")
    return value


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """
    Compare the analytic gradient of ``f`` at ``x`` with central differences.

    Args:
        f: Deterministic map from a tensor to a scalar tensor
        x: Probe point
        h: Finite-difference step

    Returns:
        max |analytic - numeric| / max(1, |numeric|) over all entries
    """
    if h <= 0:
        raise InvalidArgumentError(f"step must be positive, got {h}")

    leaf = Tensor(x.data, requires_grad=True)
    out = f(leaf)
    if not np.isfinite(out.data).all():
        raise NumericError("function is non-finite at the probe point")
    backward(out, leaves=[leaf])
    analytic = leaf.grad

    base = np.array(x.data, dtype=np.float64)
    worst = 0.0
    for idx in np.ndindex(base.shape):
        plus = base.copy()
        minus = base.copy()
        plus[idx] += h
        minus[idx] -= h
        numeric = (_evaluate(f, plus) - _evaluate(f, minus)) / (2.0 * h)
        err = abs(analytic[idx] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)

    logger.debug(f"grad_check over {base.size} entries: max relative error {worst:.3e}")
    return worst
