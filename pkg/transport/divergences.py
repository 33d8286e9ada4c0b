"""
Entropic OT quantities as differentiable scalars.

Every function solves its fixed-point problems in numpy, then returns a tensor
whose value is the exact quantity and whose gradient with respect to the atom
positions is exact for the converged problem. The gradient is carried by one
or more ``weighted_cost`` terms with constant weight matrices:

- OT_ε(α, β): weight π (envelope theorem on the dual).
- Sinkhorn negentropy: weight −½π_αα.
- Debiased Sinkhorn divergence: π_αβ, −½π_αα, −½π_ββ.
- Hausdorff divergence: the extension terms plus the implicit derivative of
  each symmetric potential, one linear solve with (I + P) per measure.
"""

import logging
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy import linalg

from common.errors import InvalidArgumentError
from engine import ops
from engine.tensor import Tensor
from transport.measures import DiscreteMeasure, cost_matrix
from transport.sinkhorn import (
    SinkhornConfig,
    extend_potential,
    sinkhorn_potentials,
    symmetric_potential,
)

logger = logging.getLogger(__name__)

CostTerm = Tuple[Tensor, Tensor, np.ndarray]


def _assemble(value: float, terms: List[CostTerm]) -> Tensor:
    """Sum of weighted-cost surrogates shifted so the forward value is ``value``"""
    surrogate = None
    for p, q, weights in terms:
        term = ops.weighted_cost(p, q, weights)
        surrogate = term if surrogate is None else ops.add(surrogate, term)
    return ops.add(surrogate, value - surrogate.item())


def _check_dims(a: DiscreteMeasure, b: DiscreteMeasure) -> None:
    if a.dim != b.dim:
        raise InvalidArgumentError(f"point dimensions differ: {a.dim} vs {b.dim}")


def ot_eps(a: DiscreteMeasure, b: DiscreteMeasure, cfg: SinkhornConfig) -> Tensor:
    """
    Entropy-regularised transport cost OT_ε(α, β).

    Args:
        a: First measure
        b: Second measure
        cfg: Solver settings

    Returns:
        Scalar tensor, differentiable in both point sets
    """
    _check_dims(a, b)
    result = sinkhorn_potentials(a, b, cfg)
    value = result.dual_value(a, b)
    return _assemble(value, [(a.points, b.points, result.plan(a, b))])


def sinkhorn_negentropy(a: DiscreteMeasure, cfg: SinkhornConfig) -> Tensor:
    """F_ε(α) = −½ OT_ε(α, α)"""
    result = symmetric_potential(a, cfg)
    value = -0.5 * result.dual_value(a, a)
    return _assemble(value, [(a.points, a.points, -0.5 * result.plan(a, a))])


def sinkhorn_divergence(a: DiscreteMeasure, b: DiscreteMeasure, cfg: SinkhornConfig) -> Tensor:
    """
    Debiased divergence S_ε = OT_ε(α, β) − ½OT_ε(α, α) − ½OT_ε(β, β).

    The three problems share one ε resolved from both supports.
    """
    _check_dims(a, b)
    eps = cfg.resolve_epsilon(a, b)
    cross = sinkhorn_potentials(a, b, cfg, epsilon=eps)
    self_a = symmetric_potential(a, cfg, epsilon=eps)
    self_b = symmetric_potential(b, cfg, epsilon=eps)

    value = cross.dual_value(a, b) - 0.5 * self_a.dual_value(a, a) - 0.5 * self_b.dual_value(b, b)
    return _assemble(value, [
        (a.points, b.points, cross.plan(a, b)),
        (a.points, a.points, -0.5 * self_a.plan(a, a)),
        (b.points, b.points, -0.5 * self_b.plan(b, b)),
    ])


def _symmetric_kernel(a: DiscreteMeasure, f: np.ndarray, cost: np.ndarray, eps: float) -> np.ndarray:
    """Row-stochastic P_kl = α_l exp((f_k + f_l − C_kl)/ε)"""
    return np.exp(a.log_weights[None, :] + (f[:, None] + f[None, :] - cost) / eps)


def _extension_kernel(target_potential: np.ndarray, source: DiscreteMeasure, source_potential: np.ndarray,
                      cost: np.ndarray, eps: float) -> np.ndarray:
    """Row-stochastic Q_il = β_l exp((h_i + f_l − C_il)/ε) of a one-pass extension"""
    return np.exp(
        source.log_weights[None, :]
        + (target_potential[:, None] + source_potential[None, :] - cost) / eps
    )


def hausdorff_divergence(a: DiscreteMeasure, b: DiscreteMeasure, cfg: SinkhornConfig) -> Tensor:
    """
    Symmetric Bregman divergence of the Sinkhorn negentropy.

    With f_α, f_β the symmetric potentials and each extended to the other
    support by one softmin pass, the value is
    ½[⟨α, f_β@α − f_α@α⟩ + ⟨β, f_α@β − f_β@β⟩].

    Args:
        a: First measure
        b: Second measure
        cfg: Solver settings

    Returns:
        Scalar tensor, differentiable in both point sets
    """
    _check_dims(a, b)
    eps = cfg.resolve_epsilon(a, b)
    sym_a = symmetric_potential(a, cfg, epsilon=eps)
    sym_b = symmetric_potential(b, cfg, epsilon=eps)
    f_a, f_b = sym_a.f, sym_b.f

    # b's potential seen from a's atoms, and a's potential seen from b's atoms
    h_ab = extend_potential(b, f_b, a, eps)
    h_ba = extend_potential(a, f_a, b, eps)

    value = 0.5 * (a.weights @ (h_ab - f_a) + b.weights @ (h_ba - f_b))

    cost_xy = cost_matrix(a, b)

    p_a = _symmetric_kernel(a, f_a, sym_a.cost, eps)
    p_b = _symmetric_kernel(b, f_b, sym_b.cost, eps)
    q_xb = _extension_kernel(h_ab, b, f_b, cost_xy, eps)
    q_ya = _extension_kernel(h_ba, a, f_a, cost_xy.T, eps)

    u_a = q_ya.T @ b.weights
    u_b = q_xb.T @ a.weights
    v_a = linalg.solve((np.eye(a.size) + p_a).T, u_a)
    v_b = linalg.solve((np.eye(b.size) + p_b).T, u_b)

    w_xy = 0.5 * (a.weights[:, None] * q_xb + (b.weights[:, None] * q_ya).T)
    w_xx = -0.5 * (v_a + 0.5 * a.weights)[:, None] * p_a
    w_yy = -0.5 * (v_b + 0.5 * b.weights)[:, None] * p_b

    return _assemble(float(value), [
        (a.points, b.points, w_xy),
        (a.points, a.points, w_xx),
        (b.points, b.points, w_yy),
    ])


DIVERGENCES: Dict[str, Callable[[DiscreteMeasure, DiscreteMeasure, SinkhornConfig], Tensor]] = {
    "SINKHORN": sinkhorn_divergence,
    "HAUSDORFF": hausdorff_divergence,
}


def divergence(kind: str, a: DiscreteMeasure, b: DiscreteMeasure, cfg: SinkhornConfig) -> Tensor:
    """Dispatch an OT divergence by loss kind name"""
    try:
        fn = DIVERGENCES[kind.upper()]
    except KeyError:
        raise InvalidArgumentError(f"unknown OT divergence '{kind}'") from None
    return fn(a, b, cfg)
