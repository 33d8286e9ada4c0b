"""
Adam optimizer with bias correction.

The state is a plain dataclass so that checkpoints can persist the moments and
the step counter next to the parameters.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from common.errors import InvalidArgumentError, InvalidStateError
from engine.tensor import Tensor


@dataclass
class AdamState:
    """First/second moments per parameter plus the shared step counter"""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidArgumentError(f"learning rate must be positive, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidArgumentError(f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "AdamState":
        state = cls(**hyper)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state

    def moments(self) -> Dict[str, np.ndarray]:
        """Flat name -> array view used by checkpoints"""
        out = {}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"adam.m.{i}"] = m
            out[f"adam.v.{i}"] = v
        return out


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """
    Apply one Adam update in place of each parameter's data.

    Parameters are immutable tensors, so the update swaps in a fresh read-only
    array; gradients are left untouched.

    Args:
        params: Trainable leaves with populated ``grad``
        state: Moments matching ``params`` one-to-one
    """
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise InvalidStateError(f"Adam state tracks {len(state.m)} parameters, got {len(params)}")

    for i, p in enumerate(params):
        if p.grad is None:
            raise InvalidStateError(f"parameter {i} with shape {p.shape} has no gradient")
        if state.m[i].shape != p.shape:
            raise InvalidStateError(f"Adam moment {i} has shape {state.m[i].shape}, parameter {p.shape}")

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t

    for i, p in enumerate(params):
        g = p.grad
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        updated = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        updated.setflags(write=False)
        p.data = updated
