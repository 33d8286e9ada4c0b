"""
Primitive registry for the differentiation engine.

Each primitive kind is a class with a ``forward`` producing the output array
(plus whatever it needs to remember) and a ``backward`` returning one gradient
per input. ``apply_primitive`` is the only place tensors are created from
primitive outputs, so shape validation, the finiteness check and tape
recording happen uniformly.

Convolution-style kinds (``conv2d``, ``transposed_conv2d``, ``avg_pool2d``)
operate over every axis after the channel axis, so 3D volumes go through the
same kinds as 2D images.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from common.errors import InvalidArgumentError, NumericOverflowError, ShapeError
from engine.tensor import Tensor, TapeEntry, as_tensor, is_grad_enabled, next_index

_REGISTRY: Dict[str, "Primitive"] = {}

_SPATIAL = "xyz"
_KERNEL = "pqr"


def register(cls: Type["Primitive"]) -> Type["Primitive"]:
    _REGISTRY[cls.kind] = cls()
    return cls


def get_primitive(kind: str) -> "Primitive":
    try:
        return _REGISTRY[kind]
    except KeyError:
        raise InvalidArgumentError(f"unknown primitive kind '{kind}'") from None


def primitive_kinds() -> List[str]:
    return sorted(_REGISTRY)


def apply_primitive(kind: str, inputs: Sequence[Any], attrs: Optional[Dict[str, Any]] = None) -> Tensor:
    """
    Apply a registered primitive and record it when any input needs gradients.

    Args:
        kind: Registered primitive name
        inputs: Tensors (arrays and scalars are wrapped as constants)
        attrs: Kind-specific attributes

    Returns:
        Output tensor
    """
    primitive = get_primitive(kind)
    tensors = tuple(as_tensor(t) for t in inputs)
    attrs = dict(attrs or {})
    saved: Dict[str, Any] = {}

    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = primitive.forward(saved, *[t.data for t in tensors], **attrs)

    out = np.asarray(out, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError(
            f"{kind} produced non-finite values for input extents {[t.shape for t in tensors]}"
        )

    result = Tensor(out)
    if is_grad_enabled() and any(t.requires_grad for t in tensors):
        saved["attrs"] = attrs
        result.requires_grad = True
        result._entry = TapeEntry(
            index=next_index(),
            kind=kind,
            inputs=tensors,
            output_id=id(result),
            saved=saved,
        )
    return result


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(kind: str, *arrays: np.ndarray) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(*[a.shape for a in arrays])
    except ValueError:
        raise ShapeError(kind, [a.shape for a in arrays], "not broadcastable") from None


class Primitive(ABC):
    """Forward and adjoint rule of one primitive kind"""

    kind: str = ""

    @abstractmethod
    def forward(self, saved: Dict[str, Any], *arrays: np.ndarray, **attrs: Any) -> np.ndarray:
        """Compute the output; stash anything the adjoint needs in ``saved``"""

    @abstractmethod
    def backward(self, entry: TapeEntry, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        """Return one gradient (or None) per input"""


# ── elementwise arithmetic ──────────────────────────────────────


@register
class Add(Primitive):
    kind = "add"

    def forward(self, saved, a, b):
        _broadcast_shape(self.kind, a, b)
        return a + b

    def backward(self, entry, grad):
        a, b = entry.inputs
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)


@register
class Sub(Primitive):
    kind = "sub"

    def forward(self, saved, a, b):
        _broadcast_shape(self.kind, a, b)
        return a - b

    def backward(self, entry, grad):
        a, b = entry.inputs
        return unbroadcast(grad, a.shape), unbroadcast(-grad, b.shape)


@register
class Mul(Primitive):
    kind = "mul"

    def forward(self, saved, a, b):
        _broadcast_shape(self.kind, a, b)
        return a * b

    def backward(self, entry, grad):
        a, b = entry.inputs
        return unbroadcast(grad * b.data, a.shape), unbroadcast(grad * a.data, b.shape)


@register
class Div(Primitive):
    kind = "div"

    def forward(self, saved, a, b):
        _broadcast_shape(self.kind, a, b)
        return a / b

    def backward(self, entry, grad):
        a, b = entry.inputs
        return (
            unbroadcast(grad / b.data, a.shape),
            unbroadcast(-grad * a.data / (b.data * b.data), b.shape),
        )


@register
class Pow(Primitive):
    kind = "pow"

    def forward(self, saved, x, exponent: float):
        return np.power(x, exponent)

    def backward(self, entry, grad):
        (x,) = entry.inputs
        exponent = entry.saved["attrs"]["exponent"]
        if exponent == 0:
            return (np.zeros_like(x.data),)
        with np.errstate(divide="ignore", invalid="ignore"):
            local = exponent * np.power(x.data, exponent - 1)
        local = np.where(np.isfinite(local), local, 0.0)
        return (grad * local,)


@register
class Exp(Primitive):
    kind = "exp"

    def forward(self, saved, x):
        out = np.exp(x)
        saved["out"] = out
        return out

    def backward(self, entry, grad):
        return (grad * entry.saved["out"],)


@register
class Log(Primitive):
    kind = "log"

    def forward(self, saved, x):
        return np.log(x)

    def backward(self, entry, grad):
        (x,) = entry.inputs
        return (grad / x.data,)


@register
class Relu(Primitive):
    kind = "relu"

    def forward(self, saved, x):
        return np.maximum(x, 0.0)

    def backward(self, entry, grad):
        (x,) = entry.inputs
        return (grad * (x.data > 0),)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@register
class Sigmoid(Primitive):
    kind = "sigmoid"

    def forward(self, saved, x):
        out = _sigmoid(x)
        saved["out"] = out
        return out

    def backward(self, entry, grad):
        out = entry.saved["out"]
        return (grad * out * (1.0 - out),)


@register
class Softplus(Primitive):
    kind = "softplus"

    def forward(self, saved, x):
        return np.logaddexp(0.0, x)

    def backward(self, entry, grad):
        (x,) = entry.inputs
        return (grad * _sigmoid(x.data),)


@register
class Clamp(Primitive):
    kind = "clamp"

    def forward(self, saved, x, low: float, high: float):
        if low > high:
            raise InvalidArgumentError(f"clamp: low {low} exceeds high {high}")
        return np.clip(x, low, high)

    def backward(self, entry, grad):
        (x,) = entry.inputs
        attrs = entry.saved["attrs"]
        inside = (x.data >= attrs["low"]) & (x.data <= attrs["high"])
        return (grad * inside,)


@register
class SoftmaxOverChannels(Primitive):
    kind = "softmax_over_channels"

    def forward(self, saved, x):
        if x.ndim < 2:
            raise ShapeError(self.kind, [x.shape], "needs a channel axis")
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=1, keepdims=True)
        saved["out"] = out
        return out

    def backward(self, entry, grad):
        s = entry.saved["out"]
        return (s * (grad - (grad * s).sum(axis=1, keepdims=True)),)


# ── reductions and shape manipulation ───────────────────────────


def _normalize_axes(axis: Any, ndim: int) -> Optional[Tuple[int, ...]]:
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(a % ndim for a in axes)


def _expand_reduced(grad: np.ndarray, shape: Tuple[int, ...], axes: Optional[Tuple[int, ...]], keepdims: bool) -> np.ndarray:
    if axes is None:
        return np.broadcast_to(np.reshape(grad, (1,) * len(shape)), shape)
    if not keepdims:
        for a in sorted(axes):
            grad = np.expand_dims(grad, a)
    return np.broadcast_to(grad, shape)


@register
class Sum(Primitive):
    kind = "sum"

    def forward(self, saved, x, axis=None, keepdims=False):
        return x.sum(axis=_normalize_axes(axis, x.ndim), keepdims=keepdims)

    def backward(self, entry, grad):
        (x,) = entry.inputs
        attrs = entry.saved["attrs"]
        axes = _normalize_axes(attrs.get("axis"), x.ndim)
        return (np.array(_expand_reduced(grad, x.shape, axes, attrs.get("keepdims", False))),)


@register
class Mean(Primitive):
    kind = "mean"

    def forward(self, saved, x, axis=None, keepdims=False):
        return x.mean(axis=_normalize_axes(axis, x.ndim), keepdims=keepdims)

    def backward(self, entry, grad):
        (x,) = entry.inputs
        attrs = entry.saved["attrs"]
        axes = _normalize_axes(attrs.get("axis"), x.ndim)
        count = x.size if axes is None else int(np.prod([x.shape[a] for a in axes]))
        expanded = _expand_reduced(grad, x.shape, axes, attrs.get("keepdims", False))
        return (np.array(expanded) / count,)


@register
class LogSumExp(Primitive):
    kind = "logsumexp"

    def forward(self, saved, x, axis: int = -1, keepdims: bool = False):
        peak = x.max(axis=axis, keepdims=True)
        total = np.log(np.exp(x - peak).sum(axis=axis, keepdims=True)) + peak
        saved["weights"] = np.exp(x - total)
        return total if keepdims else np.squeeze(total, axis=axis)

    def backward(self, entry, grad):
        attrs = entry.saved["attrs"]
        axis = attrs.get("axis", -1)
        if not attrs.get("keepdims", False):
            grad = np.expand_dims(grad, axis)
        return (grad * entry.saved["weights"],)


@register
class Broadcast(Primitive):
    kind = "broadcast"

    def forward(self, saved, x, shape):
        try:
            return np.array(np.broadcast_to(x, tuple(shape)))
        except ValueError:
            raise ShapeError(self.kind, [x.shape, tuple(shape)], "cannot broadcast") from None

    def backward(self, entry, grad):
        (x,) = entry.inputs
        return (unbroadcast(grad, x.shape),)


@register
class Reshape(Primitive):
    kind = "reshape"

    def forward(self, saved, x, shape):
        try:
            return x.reshape(tuple(shape))
        except ValueError:
            raise ShapeError(self.kind, [x.shape, tuple(shape)], "element count differs") from None

    def backward(self, entry, grad):
        (x,) = entry.inputs
        return (grad.reshape(x.shape),)


@register
class Transpose(Primitive):
    kind = "transpose"

    def forward(self, saved, x, axes):
        if sorted(axes) != list(range(x.ndim)):
            raise ShapeError(self.kind, [x.shape], f"bad permutation {tuple(axes)}")
        return np.transpose(x, axes)

    def backward(self, entry, grad):
        axes = entry.saved["attrs"]["axes"]
        return (np.transpose(grad, np.argsort(axes)),)


@register
class Take(Primitive):
    kind = "take"

    def forward(self, saved, x, indices, axis: int):
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < -x.shape[axis] or idx.max() >= x.shape[axis]):
            raise ShapeError(self.kind, [x.shape], f"index out of range on axis {axis}")
        return np.take(x, idx, axis=axis)

    def backward(self, entry, grad):
        (x,) = entry.inputs
        attrs = entry.saved["attrs"]
        axis = attrs["axis"] % x.ndim
        idx = np.asarray(attrs["indices"], dtype=np.int64) % x.shape[axis]
        out = np.zeros_like(x.data)
        moved_out = np.moveaxis(out, axis, 0)
        moved_grad = np.moveaxis(grad, axis, 0)
        np.add.at(moved_out, idx, moved_grad)
        return (out,)


@register
class ConcatChannels(Primitive):
    kind = "concat_channels"

    def forward(self, saved, *xs):
        if len(xs) < 1:
            raise ShapeError(self.kind, [], "needs at least one input")
        ref = xs[0].shape
        for x in xs[1:]:
            if x.ndim != len(ref) or x.shape[0] != ref[0] or x.shape[2:] != ref[2:]:
                raise ShapeError(self.kind, [x.shape for x in xs], "only the channel axis may differ")
        saved["splits"] = np.cumsum([x.shape[1] for x in xs])[:-1]
        return np.concatenate(xs, axis=1)

    def backward(self, entry, grad):
        return tuple(np.split(grad, entry.saved["splits"], axis=1))


@register
class GlobalAvgPool(Primitive):
    kind = "global_avg_pool"

    def forward(self, saved, x):
        if x.ndim < 3:
            raise ShapeError(self.kind, [x.shape], "needs batch, channel and spatial axes")
        return x.mean(axis=tuple(range(2, x.ndim)))

    def backward(self, entry, grad):
        (x,) = entry.inputs
        spatial = x.shape[2:]
        expanded = grad.reshape(grad.shape + (1,) * len(spatial))
        return (np.array(np.broadcast_to(expanded, x.shape)) / int(np.prod(spatial)),)


# ── layers ──────────────────────────────────────────────────────


@register
class Linear(Primitive):
    kind = "linear"

    def forward(self, saved, x, w, b):
        if x.ndim != 2 or w.ndim != 2 or w.shape[1] != x.shape[1] or b.shape != (w.shape[0],):
            raise ShapeError(self.kind, [x.shape, w.shape, b.shape])
        return x @ w.T + b

    def backward(self, entry, grad):
        x, w, _ = entry.inputs
        return grad @ w.data, grad.T @ x.data, grad.sum(axis=0)


def _spatial_letters(dims: int) -> Tuple[str, str]:
    return _SPATIAL[:dims], _KERNEL[:dims]


def _conv_same(x: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    dims = x.ndim - 2
    pads = [(0, 0), (0, 0)] + [((k - 1) // 2, (k - 1) // 2) for k in w.shape[2:]]
    windows = sliding_window_view(np.pad(x, pads), w.shape[2:], axis=tuple(range(2, 2 + dims)))
    sp, kp = _spatial_letters(dims)
    out = np.einsum(f"nc{sp}{kp},oc{kp}->no{sp}", windows, w, optimize=True)
    return out, windows


@register
class Conv2d(Primitive):
    """Stride-1 same-padded convolution with odd kernels over all spatial axes"""

    kind = "conv2d"

    def forward(self, saved, x, w, b):
        dims = x.ndim - 2
        if (
            dims < 1 or dims > 3 or w.ndim != x.ndim or w.shape[1] != x.shape[1]
            or b.shape != (w.shape[0],) or any(k % 2 == 0 for k in w.shape[2:])
        ):
            raise ShapeError(self.kind, [x.shape, w.shape, b.shape], "odd kernels, matching channels")
        out, windows = _conv_same(x, w)
        saved["windows"] = windows
        return out + b.reshape((1, -1) + (1,) * dims)

    def backward(self, entry, grad):
        x, w, _ = entry.inputs
        dims = x.ndim - 2
        sp, kp = _spatial_letters(dims)
        grad_w = np.einsum(f"nc{sp}{kp},no{sp}->oc{kp}", entry.saved["windows"], grad, optimize=True)
        flipped = np.flip(w.data, axis=tuple(range(2, 2 + dims))).swapaxes(0, 1)
        grad_x, _ = _conv_same(grad, np.ascontiguousarray(flipped))
        grad_b = grad.sum(axis=(0,) + tuple(range(2, 2 + dims)))
        return grad_x, grad_w, grad_b


@register
class TransposedConv2d(Primitive):
    """Upsampling by 2 per spatial axis with a 2-wide kernel and stride 2"""

    kind = "transposed_conv2d"

    def _letters(self, dims: int) -> Tuple[str, str, str]:
        sp, kp = _spatial_letters(dims)
        return sp, kp, "".join(s + k for s, k in zip(sp, kp))

    def forward(self, saved, x, w, b):
        dims = x.ndim - 2
        if (
            dims < 1 or dims > 3 or w.ndim != x.ndim or w.shape[0] != x.shape[1]
            or any(k != 2 for k in w.shape[2:]) or b.shape != (w.shape[1],)
        ):
            raise ShapeError(self.kind, [x.shape, w.shape, b.shape], "kernel (C_in, C_out, 2, ...)")
        sp, kp, inter = self._letters(dims)
        out = np.einsum(f"nc{sp},co{kp}->no{inter}", x, w, optimize=True)
        n, o = x.shape[0], w.shape[1]
        out = out.reshape((n, o) + tuple(2 * s for s in x.shape[2:]))
        return out + b.reshape((1, -1) + (1,) * dims)

    def backward(self, entry, grad):
        x, w, _ = entry.inputs
        dims = x.ndim - 2
        sp, kp, inter = self._letters(dims)
        split = grad.reshape(grad.shape[:2] + tuple(v for s in x.shape[2:] for v in (s, 2)))
        grad_x = np.einsum(f"no{inter},co{kp}->nc{sp}", split, w.data, optimize=True)
        grad_w = np.einsum(f"nc{sp},no{inter}->co{kp}", x.data, split, optimize=True)
        grad_b = grad.sum(axis=(0,) + tuple(range(2, 2 + dims)))
        return grad_x, grad_w, grad_b


@register
class AvgPool2d(Primitive):
    """Non-overlapping 2-wide average pooling over all spatial axes"""

    kind = "avg_pool2d"

    def forward(self, saved, x):
        dims = x.ndim - 2
        if dims < 1 or any(s % 2 for s in x.shape[2:]):
            raise ShapeError(self.kind, [x.shape], "spatial extents must be even")
        split = x.reshape(x.shape[:2] + tuple(v for s in x.shape[2:] for v in (s // 2, 2)))
        return split.mean(axis=tuple(3 + 2 * i for i in range(dims)))

    def backward(self, entry, grad):
        (x,) = entry.inputs
        dims = x.ndim - 2
        expanded = grad.reshape(grad.shape[:2] + tuple(v for s in grad.shape[2:] for v in (s, 1)))
        target = x.shape[:2] + tuple(v for s in grad.shape[2:] for v in (s, 2))
        return (np.broadcast_to(expanded, target).reshape(x.shape) / (2 ** dims),)


# ── transport ───────────────────────────────────────────────────


@register
class WeightedCost(Primitive):
    """Sum over pairs of W_ij * 0.5 * |p_i - q_j|^2 with W held constant"""

    kind = "weighted_cost"

    def forward(self, saved, p, q, weights):
        weights = np.asarray(weights, dtype=np.float64)
        if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1] or weights.shape != (p.shape[0], q.shape[0]):
            raise ShapeError(self.kind, [p.shape, q.shape, weights.shape])
        sq = (p * p).sum(axis=1)[:, None] + (q * q).sum(axis=1)[None, :] - 2.0 * p @ q.T
        return 0.5 * float((weights * np.maximum(sq, 0.0)).sum())

    def backward(self, entry, grad):
        p, q = entry.inputs
        weights = np.asarray(entry.saved["attrs"]["weights"], dtype=np.float64)
        g = float(grad)
        grad_p = weights.sum(axis=1)[:, None] * p.data - weights @ q.data
        grad_q = weights.sum(axis=0)[:, None] * q.data - weights.T @ p.data
        return g * grad_p, g * grad_q
