"""
Dense tensors and the reverse-mode tape.

Every primitive application that touches a tensor requiring gradients leaves a
``TapeEntry`` on its output. Entries carry a global sequence number, so the
entries reachable from a loss, sorted by that number, are a topological order
of the define-by-run graph.
"""

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from common.errors import InvalidArgumentError

_sequence = itertools.count()
_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    """Whether primitive applications are currently recorded"""
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording inside the block (evaluation, finite differences)"""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


@dataclass
class TapeEntry:
    """One recorded primitive application"""
    index: int
    kind: str
    inputs: Tuple["Tensor", ...]
    output_id: int
    saved: Dict[str, Any] = field(default_factory=dict)


class Tensor:
    """
    N-dimensional array of 64-bit reals with an optional gradient slot.

    Tensors are immutable once created; primitives always allocate new ones.
    """

    __array_priority__ = 1000

    def __init__(self, data: Any, requires_grad: bool = False):
        array = np.array(data, dtype=np.float64)
        if array.ndim > 0 and 0 in array.shape:
            raise InvalidArgumentError(f"tensor extents must be positive, got {array.shape}")
        array.setflags(write=False)
        self.data: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._entry: Optional[TapeEntry] = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._entry is None

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidArgumentError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __float__(self) -> float:
        return self.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # Operator sugar; the primitives live in engine.ops.

    def __add__(self, other: Any) -> "Tensor":
        from engine import ops
        return ops.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        from engine import ops
        return ops.add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        from engine import ops
        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from engine import ops
        return ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from engine import ops
        return ops.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        from engine import ops
        return ops.mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        from engine import ops
        return ops.div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        from engine import ops
        return ops.div(other, self)

    def __neg__(self) -> "Tensor":
        from engine import ops
        return ops.mul(self, -1.0)

    def __pow__(self, exponent: float) -> "Tensor":
        from engine import ops
        return ops.pow(self, exponent)


def as_tensor(value: Any) -> Tensor:
    """Wrap arrays and scalars as constant tensors; tensors pass through"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class Tape:
    """
    Ordered record of the primitive applications a loss depends on.

    Built from the loss at backward time; entries are in application order.
    """

    def __init__(self, entries: List[TapeEntry]):
        self.entries = entries

    @classmethod
    def from_output(cls, output: Tensor) -> "Tape":
        seen: Dict[int, TapeEntry] = {}
        stack = [output]
        while stack:
            tensor = stack.pop()
            entry = tensor._entry
            if entry is None or entry.index in seen:
                continue
            seen[entry.index] = entry
            stack.extend(entry.inputs)
        return cls([seen[i] for i in sorted(seen)])

    def __len__(self) -> int:
        return len(self.entries)


def backward(loss: Tensor, leaves: Optional[Iterable[Tensor]] = None) -> None:
    """
    Populate ``grad`` on every gradient-requiring leaf reachable from ``loss``.

    Gradients accumulate into existing ``grad`` arrays. Leaves passed in
    ``leaves`` that the loss does not reach receive a zero gradient.

    Args:
        loss: Scalar tensor produced on the tape
        leaves: Optional parameters to zero-fill when unreachable
    """
    from engine.primitives import get_primitive

    if loss.data.size != 1:
        raise InvalidArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    reached: Dict[int, Tensor] = {}
    if loss.is_leaf and loss.requires_grad:
        reached[id(loss)] = loss

    for entry in reversed(Tape.from_output(loss).entries):
        upstream = grads.pop(entry.output_id, None)
        if upstream is None:
            continue
        primitive = get_primitive(entry.kind)
        input_grads = primitive.backward(entry, upstream)
        for tensor, grad in zip(entry.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            grads[key] = grad if key not in grads else grads[key] + grad
            if tensor.is_leaf:
                reached[key] = tensor

    for key, tensor in reached.items():
        grad = grads.get(key)
        if grad is None:
            continue
        tensor.grad = np.array(grad) if tensor.grad is None else tensor.grad + grad

    if leaves is not None:
        for tensor in leaves:
            if tensor.grad is None:
                tensor.grad = np.zeros_like(tensor.data)


def zero_grads(tensors: Sequence[Tensor]) -> None:
    for tensor in tensors:
        tensor.grad = None


def next_index() -> int:
    return next(_sequence)
