"""
Parameter containers, initialisation and small building blocks.

Weights are drawn from U(−√k, √k) with k = groups / (C_in · ∏kernel) for
convolutions, k = 1 / in_features for linear layers and
k = groups / (C_out · ∏kernel) for transposed convolutions. Biases use the
same bound as their layer's weights.
"""

import logging
from collections import OrderedDict
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from common.errors import CheckpointError, InvalidArgumentError
from engine import ops
from engine.tensor import Tensor

logger = logging.getLogger(__name__)


class ModelParams:
    """
    Ordered mapping of dotted parameter names to trainable tensors.

    Registration order fixes both the initialisation draws and the order in
    which checkpoints store payloads.
    """

    def __init__(self):
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict()

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise InvalidArgumentError(f"unknown parameter '{name}'") from None

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise InvalidArgumentError(f"parameter '{name}' registered twice")
        tensor = Tensor(value, requires_grad=True)
        self._tensors[name] = tensor
        return tensor

    def names(self) -> List[str]:
        return list(self._tensors)

    def tensors(self) -> List[Tensor]:
        return list(self._tensors.values())

    def items(self):
        return self._tensors.items()

    def count(self) -> int:
        return int(sum(t.size for t in self._tensors.values()))

    def to_arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, np.array(t.data)) for name, t in self._tensors.items())

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        """Replace every parameter's values; names and shapes must match exactly"""
        missing = [n for n in self._tensors if n not in arrays]
        extra = [n for n in arrays if n not in self._tensors]
        if missing or extra:
            raise CheckpointError(f"parameter names differ: missing {missing[:5]}, unexpected {extra[:5]}")
        for name, tensor in self._tensors.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise CheckpointError(f"parameter '{name}' has shape {value.shape}, expected {tensor.shape}")
            tensor.data = np.array(value)
            tensor.data.setflags(write=False)
            tensor.grad = None

    def substitute(self, name: str, tensor: Tensor) -> "ModelParams":
        """Shallow copy with one entry replaced; the other tensors are shared"""
        if name not in self._tensors:
            raise InvalidArgumentError(f"unknown parameter '{name}'")
        if tensor.shape != self._tensors[name].shape:
            raise InvalidArgumentError(f"parameter '{name}' has shape {self._tensors[name].shape}, got {tensor.shape}")
        copy = ModelParams()
        copy._tensors = OrderedDict(self._tensors)
        copy._tensors[name] = tensor
        return copy

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.grad = None


def conv_bound(c_in: int, kernel: Sequence[int], groups: int = 1) -> float:
    return float(np.sqrt(groups / (c_in * int(np.prod(kernel)))))


def linear_bound(in_features: int) -> float:
    return float(np.sqrt(1.0 / in_features))


def transposed_bound(c_out: int, kernel: Sequence[int], groups: int = 1) -> float:
    return float(np.sqrt(groups / (c_out * int(np.prod(kernel)))))


class ParamInitializer:
    """Registers layers on a ModelParams, drawing values from one generator"""

    def __init__(self, params: ModelParams, rng: np.random.Generator, spatial_dims: int):
        self.params = params
        self.rng = rng
        self.spatial_dims = spatial_dims

    def _uniform(self, bound: float, shape: Tuple[int, ...]) -> np.ndarray:
        return self.rng.uniform(-bound, bound, size=shape)

    def conv(self, name: str, c_in: int, c_out: int, kernel_size: int = 3) -> None:
        kernel = (kernel_size,) * self.spatial_dims
        bound = conv_bound(c_in, kernel)
        self.params.add(f"{name}.weight", self._uniform(bound, (c_out, c_in) + kernel))
        self.params.add(f"{name}.bias", self._uniform(bound, (c_out,)))

    def transposed(self, name: str, c_in: int, c_out: int) -> None:
        kernel = (2,) * self.spatial_dims
        bound = transposed_bound(c_out, kernel)
        self.params.add(f"{name}.weight", self._uniform(bound, (c_in, c_out) + kernel))
        self.params.add(f"{name}.bias", self._uniform(bound, (c_out,)))

    def linear(self, name: str, in_features: int, out_features: int) -> None:
        bound = linear_bound(in_features)
        self.params.add(f"{name}.weight", self._uniform(bound, (out_features, in_features)))
        self.params.add(f"{name}.bias", self._uniform(bound, (out_features,)))

    def block(self, name: str, c_in: int, c_out: int) -> None:
        self.conv(f"{name}.conv1", c_in, c_out)
        self.conv(f"{name}.conv2", c_out, c_out)


def conv(params: ModelParams, name: str, x: Tensor) -> Tensor:
    return ops.conv2d(x, params[f"{name}.weight"], params[f"{name}.bias"])


def linear(params: ModelParams, name: str, x: Tensor) -> Tensor:
    return ops.linear(x, params[f"{name}.weight"], params[f"{name}.bias"])


def conv_block(params: ModelParams, name: str, x: Tensor) -> Tensor:
    """conv → ReLU → conv → ReLU"""
    x = ops.relu(conv(params, f"{name}.conv1", x))
    return ops.relu(conv(params, f"{name}.conv2", x))


def expand_latent(z: Tensor, extents: Sequence[int]) -> Tensor:
    """
    Repeat each latent coordinate over the spatial extents.

    Args:
        z: (D,) or (B, D) tensor
        extents: Spatial extents of the target maps

    Returns:
        (B, D, *extents) tensor of constant channels; (D, *extents) for a 1-D z
    """
    extents = tuple(int(e) for e in extents)
    if z.ndim == 1:
        shaped = ops.reshape(z, (z.shape[0],) + (1,) * len(extents))
        return ops.broadcast_to(shaped, (z.shape[0],) + extents)
    if z.ndim != 2:
        raise InvalidArgumentError(f"latent must be (D,) or (B, D), got {z.shape}")
    shaped = ops.reshape(z, z.shape + (1,) * len(extents))
    return ops.broadcast_to(shaped, z.shape + extents)


def pool_to_limit(maps: Tensor, limit: int) -> Tensor:
    """
    Average-pool (N, C, ...) maps by 2 until every spatial extent is ≤ ``limit``.

    Args:
        maps: Tensor with batch and channel axes
        limit: Largest allowed spatial extent

    Returns:
        Pooled tensor
    """
    while max(maps.shape[2:]) > limit:
        if any(s % 2 for s in maps.shape[2:]):
            raise InvalidArgumentError(f"cannot pool extents {maps.shape[2:]} down to {limit}")
        maps = ops.avg_pool2d(maps)
    return maps


def pool_array_to_limit(maps: np.ndarray, limit: int) -> np.ndarray:
    """``pool_to_limit`` for constant arrays shaped (N, ...) without a channel axis"""
    out = np.asarray(maps, dtype=np.float64)
    while max(out.shape[1:]) > limit:
        if any(s % 2 for s in out.shape[1:]):
            raise InvalidArgumentError(f"cannot pool extents {out.shape[1:]} down to {limit}")
        dims = out.ndim - 1
        split = out.reshape(out.shape[:1] + tuple(v for s in out.shape[1:] for v in (s // 2, 2)))
        out = split.mean(axis=tuple(2 + 2 * i for i in range(dims)))
    return out
