"""
Log-domain Sinkhorn solvers with ε-scaling.

Two fixed-point problems are solved here:

- the generic problem between two measures, alternating
  f ← softmin_b(g), g ← softmin_a(f);
- the symmetric problem OT_ε(α, α), using the averaged update
  f ← ½(f + softmin_a(f)) which converges where the plain update oscillates.

Both anneal ε from the largest cost down to the target, multiplying by
``scaling`` per stage and warm-starting every stage from the previous
potentials. Intermediate stages stop at a residual proportional to their own ε;
only the last stage must reach ``tol``. All stages draw on one ``max_iters``
budget.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp

from common.errors import ConvergenceError, InvalidArgumentError
from transport.measures import DiscreteMeasure, cost_matrix, squared_diameter

logger = logging.getLogger(__name__)

DEFAULT_BLUR = 0.05
MIN_EPSILON = 1e-9
# intermediate ε stages stop once the residual falls below this fraction of their ε
STAGE_TOL = 1e-3


@dataclass
class SinkhornConfig:
    """
    Solver settings.

    ``epsilon`` of None resolves to 0.05² × squared diameter of the operands.
    """
    epsilon: Optional[float] = None
    max_iters: int = 500
    tol: float = 1e-6
    scaling: float = 0.5

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon <= 0:
            raise InvalidArgumentError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iters < 1:
            raise InvalidArgumentError(f"max_iters must be positive, got {self.max_iters}")
        if self.tol <= 0:
            raise InvalidArgumentError(f"tol must be positive, got {self.tol}")
        if not 0.0 < self.scaling < 1.0:
            raise InvalidArgumentError(f"scaling must lie in (0, 1), got {self.scaling}")

    def resolve_epsilon(self, a: DiscreteMeasure, b: Optional[DiscreteMeasure] = None) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        return max(DEFAULT_BLUR ** 2 * squared_diameter(a, b), MIN_EPSILON)


@dataclass
class SinkhornResult:
    """Converged dual potentials of one problem"""
    f: np.ndarray
    g: np.ndarray
    epsilon: float
    iterations: int
    cost: np.ndarray

    def log_plan(self, a: DiscreteMeasure, b: DiscreteMeasure) -> np.ndarray:
        return (
            a.log_weights[:, None] + b.log_weights[None, :]
            + (self.f[:, None] + self.g[None, :] - self.cost) / self.epsilon
        )

    def plan(self, a: DiscreteMeasure, b: DiscreteMeasure) -> np.ndarray:
        """πᵢⱼ = αᵢβⱼ exp((fᵢ + gⱼ − Cᵢⱼ)/ε)"""
        return np.exp(self.log_plan(a, b))

    def dual_value(self, a: DiscreteMeasure, b: DiscreteMeasure) -> float:
        """⟨α, f⟩ + ⟨β, g⟩ − ε(Σπ − 1); equals ⟨π, C⟩ + ε·KL(π‖α⊗β) at the fixed point"""
        mass = float(self.plan(a, b).sum())
        return float(a.weights @ self.f + b.weights @ self.g - self.epsilon * (mass - 1.0))


def softmin(epsilon: float, cost: np.ndarray, log_weights: np.ndarray, potential: np.ndarray) -> np.ndarray:
    """-ε log Σⱼ βⱼ exp((hⱼ − Cᵢⱼ)/ε), reduced over the last axis"""
    return -epsilon * logsumexp(log_weights[None, :] + (potential[None, :] - cost) / epsilon, axis=1)


def epsilon_schedule(cost: np.ndarray, target: float, scaling: float) -> List[float]:
    """ε₀ = max cost, then ε₀·s, ε₀·s², … clipped at the target"""
    stages = []
    current = float(cost.max()) if cost.size else 0.0
    while current > target:
        stages.append(current)
        current *= scaling
    stages.append(target)
    return stages


def _sup(x: np.ndarray) -> float:
    return float(np.max(np.abs(x))) if x.size else 0.0


def stage_tolerance(cfg: SinkhornConfig, stage_eps: float, final: bool) -> float:
    """Stopping residual of one ε stage; only the last stage must reach ``cfg.tol``"""
    return cfg.tol if final else max(cfg.tol, STAGE_TOL * stage_eps)


def sinkhorn_potentials(
    a: DiscreteMeasure,
    b: DiscreteMeasure,
    cfg: SinkhornConfig,
    epsilon: Optional[float] = None,
) -> SinkhornResult:
    """
    Solve the generic entropic problem between ``a`` and ``b``.

    Args:
        a: Source measure
        b: Target measure
        cfg: Solver settings
        epsilon: Explicit ε, used when the caller shares one ε across problems

    Returns:
        Potentials f on supp(a), g on supp(b) and the iterations used
    """
    cost = cost_matrix(a, b)
    eps = float(epsilon) if epsilon is not None else cfg.resolve_epsilon(a, b)
    log_a, log_b = a.log_weights, b.log_weights

    f = np.zeros(a.size)
    g = np.zeros(b.size)
    iterations = 0
    residual = np.inf
    stages = epsilon_schedule(cost, eps, cfg.scaling)

    converged = False
    for stage, stage_eps in enumerate(stages):
        tol = stage_tolerance(cfg, stage_eps, final=stage == len(stages) - 1)
        converged = False
        while iterations < cfg.max_iters:
            f_new = softmin(stage_eps, cost, log_b, g)
            g_new = softmin(stage_eps, cost.T, log_a, f_new)
            residual = max(_sup(f_new - f), _sup(g_new - g))
            f, g = f_new, g_new
            iterations += 1
            if residual < tol:
                converged = True
                break
    if not converged:
        raise ConvergenceError("Sinkhorn did not converge", residual, iterations)

    logger.debug(f"Sinkhorn converged in {iterations} iterations at epsilon={eps:.3e}")
    return SinkhornResult(f=f, g=g, epsilon=eps, iterations=iterations, cost=cost)


def symmetric_potential(a: DiscreteMeasure, cfg: SinkhornConfig, epsilon: Optional[float] = None) -> SinkhornResult:
    """
    Solve OT_ε(α, α) with the averaged fixed-point update.

    Args:
        a: Measure
        cfg: Solver settings
        epsilon: Explicit ε, used when the caller shares one ε across problems

    Returns:
        Result with f == g
    """
    cost = cost_matrix(a, a)
    eps = float(epsilon) if epsilon is not None else cfg.resolve_epsilon(a)
    log_a = a.log_weights

    f = np.zeros(a.size)
    iterations = 0
    residual = np.inf
    stages = epsilon_schedule(cost, eps, cfg.scaling)

    converged = False
    for stage, stage_eps in enumerate(stages):
        tol = stage_tolerance(cfg, stage_eps, final=stage == len(stages) - 1)
        converged = False
        while iterations < cfg.max_iters:
            f_new = 0.5 * (f + softmin(stage_eps, cost, log_a, f))
            residual = _sup(f_new - f)
            f = f_new
            iterations += 1
            if residual < tol:
                converged = True
                break
    if not converged:
        raise ConvergenceError("symmetric Sinkhorn did not converge", residual, iterations)

    return SinkhornResult(f=f, g=f.copy(), epsilon=eps, iterations=iterations, cost=cost)


def extend_potential(
    source: DiscreteMeasure,
    potential: np.ndarray,
    target: DiscreteMeasure,
    epsilon: float,
) -> np.ndarray:
    """Evaluate a converged potential of ``source`` on the atoms of ``target`` by one softmin pass"""
    cost = cost_matrix(target, source)
    return softmin(epsilon, cost, source.log_weights, potential)
