"""Dense tensors with reverse-mode differentiation."""
from .tensor import Tensor, TapeEntry, Tape, backward, no_grad, is_grad_enabled, as_tensor, zero_grads
from .primitives import apply_primitive, get_primitive, primitive_kinds
from .optim import AdamState, adam_step
from .gradcheck import grad_check
from . import ops

__all__ = [
    "Tensor",
    "TapeEntry",
    "Tape",
    "backward",
    "no_grad",
    "is_grad_enabled",
    "as_tensor",
    "zero_grads",
    "apply_primitive",
    "get_primitive",
    "primitive_kinds",
    "AdamState",
    "adam_step",
    "grad_check",
    "ops",
]
