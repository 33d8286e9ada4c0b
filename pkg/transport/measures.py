"""
Weighted point clouds and the squared-Euclidean ground cost.
"""

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from common.errors import InvalidArgumentError
from engine.tensor import Tensor, as_tensor

WEIGHT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class DiscreteMeasure:
    """
    Σ αᵢ δ_{xᵢ} over ℝ^D.

    ``points`` may be a gradient-carrying tensor; divergences differentiate
    with respect to it. ``weights`` are constants.
    """
    points: Tensor
    weights: np.ndarray

    def __post_init__(self):
        points = as_tensor(self.points)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if points.ndim != 2:
            raise InvalidArgumentError(f"points must be an N×D matrix, got shape {points.shape}")
        if weights.shape[0] != points.shape[0]:
            raise InvalidArgumentError(
                f"{points.shape[0]} points but {weights.shape[0]} weights"
            )
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise InvalidArgumentError("weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise InvalidArgumentError(f"weights must sum to 1, got {weights.sum():.12f}")
        if not np.all(np.isfinite(points.data)):
            raise InvalidArgumentError("points contain non-finite coordinates")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, points: Any) -> "DiscreteMeasure":
        tensor = as_tensor(points)
        if tensor.ndim != 2:
            raise InvalidArgumentError(f"points must be an N×D matrix, got shape {tensor.shape}")
        n = tensor.shape[0]
        return cls(tensor, np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def coords(self) -> np.ndarray:
        return self.points.data

    @property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)


def cost_matrix(a: DiscreteMeasure, b: DiscreteMeasure) -> np.ndarray:
    """
    Pairwise cost C_ij = ½‖xᵢ − yⱼ‖².

    Args:
        a: Measure with N atoms
        b: Measure with M atoms in the same dimension

    Returns:
        N×M array
    """
    if a.dim != b.dim:
        raise InvalidArgumentError(f"point dimensions differ: {a.dim} vs {b.dim}")
    x, y = a.coords, b.coords
    diff = x[:, None, :] - y[None, :, :]
    return 0.5 * np.einsum("ijd,ijd->ij", diff, diff)


def squared_diameter(a: DiscreteMeasure, b: Optional[DiscreteMeasure] = None) -> float:
    """Squared diagonal of the bounding box of both supports"""
    coords = a.coords if b is None else np.vstack([a.coords, b.coords])
    extent = coords.max(axis=0) - coords.min(axis=0)
    return float(extent @ extent)
