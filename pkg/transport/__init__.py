"""Entropic optimal transport on weighted point clouds."""
from .measures import DiscreteMeasure, cost_matrix, squared_diameter
from .sinkhorn import SinkhornConfig, SinkhornResult, sinkhorn_potentials, symmetric_potential, extend_potential
from .divergences import ot_eps, sinkhorn_negentropy, sinkhorn_divergence, hausdorff_divergence, divergence

__all__ = [
    "DiscreteMeasure",
    "cost_matrix",
    "squared_diameter",
    "SinkhornConfig",
    "SinkhornResult",
    "sinkhorn_potentials",
    "symmetric_potential",
    "extend_potential",
    "ot_eps",
    "sinkhorn_negentropy",
    "sinkhorn_divergence",
    "hausdorff_divergence",
    "divergence",
]
