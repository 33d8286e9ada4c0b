"""Segmentation models: cVAE with distributional losses and the baselines."""
from .config import LossKind, ModelKind, UNetConfig, LatentSpec, LossSpec
from .layers import ModelParams, ParamInitializer, expand_latent
from .base_model import (
    SegmentationModel,
    ProbUNetModel,
    PulaskiModel,
    SSNModel,
    MCDropoutModel,
    build_model,
    load_model,
    model_from_meta,
)
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "LossKind",
    "ModelKind",
    "UNetConfig",
    "LatentSpec",
    "LossSpec",
    "ModelParams",
    "ParamInitializer",
    "expand_latent",
    "SegmentationModel",
    "ProbUNetModel",
    "PulaskiModel",
    "SSNModel",
    "MCDropoutModel",
    "build_model",
    "load_model",
    "model_from_meta",
    "save_checkpoint",
    "load_checkpoint",
]
