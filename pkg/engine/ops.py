"""
Public tensor operations.

Thin wrappers that name the attributes of each primitive kind. Everything that
needs a gradient goes through ``apply_primitive``; nothing here touches the
tape directly.
"""

from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np

from common.errors import InvalidArgumentError
from engine.primitives import apply_primitive
from engine.tensor import Tensor

Axis = Optional[Union[int, Tuple[int, ...]]]


def add(a: Any, b: Any) -> Tensor:
    return apply_primitive("add", [a, b])


def sub(a: Any, b: Any) -> Tensor:
    return apply_primitive("sub", [a, b])


def mul(a: Any, b: Any) -> Tensor:
    return apply_primitive("mul", [a, b])


def div(a: Any, b: Any) -> Tensor:
    return apply_primitive("div", [a, b])


def pow(x: Any, exponent: float) -> Tensor:  # noqa: A001
    return apply_primitive("pow", [x], {"exponent": float(exponent)})


def square(x: Any) -> Tensor:
    return apply_primitive("mul", [x, x])


def exp(x: Any) -> Tensor:
    return apply_primitive("exp", [x])


def log(x: Any) -> Tensor:
    return apply_primitive("log", [x])


def relu(x: Any) -> Tensor:
    return apply_primitive("relu", [x])


def sigmoid(x: Any) -> Tensor:
    return apply_primitive("sigmoid", [x])


def softplus(x: Any) -> Tensor:
    return apply_primitive("softplus", [x])


def clamp(x: Any, low: float, high: float) -> Tensor:
    return apply_primitive("clamp", [x], {"low": float(low), "high": float(high)})


def softmax_over_channels(x: Any) -> Tensor:
    return apply_primitive("softmax_over_channels", [x])


def sum(x: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return apply_primitive("sum", [x], {"axis": axis, "keepdims": keepdims})


def mean(x: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return apply_primitive("mean", [x], {"axis": axis, "keepdims": keepdims})


def logsumexp(x: Any, axis: int = -1, keepdims: bool = False) -> Tensor:
    return apply_primitive("logsumexp", [x], {"axis": axis, "keepdims": keepdims})


def broadcast_to(x: Any, shape: Sequence[int]) -> Tensor:
    return apply_primitive("broadcast", [x], {"shape": tuple(int(s) for s in shape)})


def reshape(x: Any, shape: Sequence[int]) -> Tensor:
    return apply_primitive("reshape", [x], {"shape": tuple(int(s) for s in shape)})


def flatten(x: Tensor, start: int = 1) -> Tensor:
    """Collapse every axis from ``start`` on into one"""
    lead = x.shape[:start]
    return reshape(x, lead + (int(np.prod(x.shape[start:])),))


def transpose(x: Any, axes: Sequence[int]) -> Tensor:
    return apply_primitive("transpose", [x], {"axes": tuple(int(a) for a in axes)})


def take(x: Any, indices: Union[int, Sequence[int]], axis: int) -> Tensor:
    return apply_primitive("take", [x], {"indices": np.asarray(indices, dtype=np.int64), "axis": int(axis)})


def concat_channels(tensors: Sequence[Any]) -> Tensor:
    return apply_primitive("concat_channels", list(tensors))


def global_avg_pool(x: Any) -> Tensor:
    return apply_primitive("global_avg_pool", [x])


def linear(x: Any, weight: Any, bias: Any) -> Tensor:
    return apply_primitive("linear", [x, weight, bias])


def conv2d(x: Any, weight: Any, bias: Any) -> Tensor:
    return apply_primitive("conv2d", [x, weight, bias])


def transposed_conv2d(x: Any, weight: Any, bias: Any) -> Tensor:
    return apply_primitive("transposed_conv2d", [x, weight, bias])


def avg_pool2d(x: Any) -> Tensor:
    return apply_primitive("avg_pool2d", [x])


def weighted_cost(p: Any, q: Any, weights: np.ndarray) -> Tensor:
    """Differentiable Σ W_ij ½‖p_i − q_j‖² for a constant weight matrix"""
    return apply_primitive("weighted_cost", [p, q], {"weights": np.asarray(weights, dtype=np.float64)})


def spatial_dropout(x: Tensor, rate: float, rng: np.random.Generator, active: bool = True) -> Tensor:
    """
    Zero whole channels with probability ``rate`` and rescale the survivors.

    Args:
        x: Tensor shaped (N, C, ...)
        rate: Drop probability in [0, 1)
        rng: Generator supplying the channel mask
        active: Identity when False

    Returns:
        Tensor of the same shape
    """
    if not 0.0 <= rate < 1.0:
        raise InvalidArgumentError(f"dropout rate must lie in [0, 1), got {rate}")
    if not active or rate == 0.0:
        return x
    if x.ndim < 2:
        raise InvalidArgumentError(f"spatial dropout needs (N, C, ...) input, got {x.shape}")
    keep = rng.random(x.shape[:2]) >= rate
    mask = keep.astype(np.float64).reshape(x.shape[:2] + (1,) * (x.ndim - 2)) / (1.0 - rate)
    return mul(x, mask)
