"""
Architecture and loss configuration for the segmentation models.
"""

from dataclasses import dataclass
from enum import Enum

from common.errors import InvalidArgumentError


class LossKind(Enum):
    """Reconstruction term of the training objective"""
    CE = "CE"
    FTL = "FTL"
    SINKHORN = "SINKHORN"
    HAUSDORFF = "HAUSDORFF"
    FRECHET = "FRECHET"

    @property
    def is_distributional(self) -> bool:
        return self in (LossKind.SINKHORN, LossKind.HAUSDORFF, LossKind.FRECHET)


class ModelKind(Enum):
    """Trainable model families exposed on the command line"""
    PULASKI_SINKHORN = "pulaski-sinkhorn"
    PULASKI_HAUSDORFF = "pulaski-hausdorff"
    PULASKI_FRECHET = "pulaski-frechet"
    PROBUNET_CE = "probunet-ce"
    PROBUNET_FTL = "probunet-ftl"
    MCDO = "mcdo"
    SSN = "ssn"

    @property
    def default_loss(self) -> LossKind:
        return {
            ModelKind.PULASKI_SINKHORN: LossKind.SINKHORN,
            ModelKind.PULASKI_HAUSDORFF: LossKind.HAUSDORFF,
            ModelKind.PULASKI_FRECHET: LossKind.FRECHET,
            ModelKind.PROBUNET_CE: LossKind.CE,
            ModelKind.PROBUNET_FTL: LossKind.FTL,
            ModelKind.MCDO: LossKind.CE,
            ModelKind.SSN: LossKind.CE,
        }[self]

    @property
    def has_latent(self) -> bool:
        return self.name.startswith("PULASKI") or self.name.startswith("PROBUNET")


@dataclass
class UNetConfig:
    """Backbone shape; ``depth`` counts pooling levels"""
    spatial_dims: int = 2
    depth: int = 3
    base_channels: int = 8
    n_classes: int = 2
    dropout_rate: float = 0.0
    in_channels: int = 1
    head_layers: int = 2

    def __post_init__(self):
        if self.spatial_dims not in (2, 3):
            raise InvalidArgumentError(f"spatial_dims must be 2 or 3, got {self.spatial_dims}")
        if self.depth < 1:
            raise InvalidArgumentError(f"depth must be at least 1, got {self.depth}")
        if self.base_channels < 1:
            raise InvalidArgumentError(f"base_channels must be at least 1, got {self.base_channels}")
        if self.n_classes < 2:
            raise InvalidArgumentError(f"n_classes must be at least 2, got {self.n_classes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidArgumentError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.head_layers < 1:
            raise InvalidArgumentError(f"head_layers must be at least 1, got {self.head_layers}")

    @property
    def required_multiple(self) -> int:
        return 2 ** self.depth

    def level_channels(self, level: int) -> int:
        return self.base_channels * 2 ** level


@dataclass
class LatentSpec:
    dim: int = 3

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgumentError(f"latent dim must be at least 1, got {self.dim}")


@dataclass
class LossSpec:
    """
    Training objective.

    ``conditioning`` selects which annotation conditions the posterior for each
    latent draw of the distributional losses: ``resample`` draws one uniformly
    per draw, ``fixed`` pairs draw m with annotation m mod R.
    """
    kind: LossKind = LossKind.HAUSDORFF
    beta: float = 1.0
    m_samples: int = 4
    ftl_alpha: float = 0.7
    ftl_beta: float = 0.3
    ftl_gamma: float = 4.0 / 3.0
    conditioning: str = "resample"
    frechet_exact_value: bool = True
    ssn_rank: int = 10

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = LossKind(self.kind.upper())
        if self.beta < 0:
            raise InvalidArgumentError(f"beta must be nonnegative, got {self.beta}")
        if self.m_samples < 1:
            raise InvalidArgumentError(f"m_samples must be at least 1, got {self.m_samples}")
        if self.conditioning not in ("resample", "fixed"):
            raise InvalidArgumentError(f"conditioning must be 'resample' or 'fixed', got '{self.conditioning}'")
        if self.ssn_rank < 1:
            raise InvalidArgumentError(f"ssn_rank must be at least 1, got {self.ssn_rank}")

    @property
    def ftl_params(self):
        return self.ftl_alpha, self.ftl_beta, self.ftl_gamma
