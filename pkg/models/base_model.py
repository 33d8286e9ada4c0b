"""
Segmentation model families behind one interface.

Every trainable method of the comparison (the distributional-loss cVAE, the
CE/FTL Probabilistic U-Net, MC-Dropout and the SSN head) is wrapped in a
SegmentationModel so that training, sampling and evaluation code never needs
to know which family it handles.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from common.errors import CheckpointError, InvalidArgumentError
from engine import ops
from engine.tensor import Tensor
from models import mcdo, prob_unet, ssn
from models.checkpoint import load_checkpoint, save_checkpoint
from models.config import LatentSpec, LossKind, LossSpec, ModelKind, UNetConfig
from models.layers import ModelParams
from models.pulaski import batch_pulaski_loss
from transport.sinkhorn import SinkhornConfig

logger = logging.getLogger(__name__)


def expand_pairs(images: Tensor, annotations: np.ndarray) -> Tuple[Tensor, np.ndarray]:
    """
    Lump every (image, annotation) combination into an independent pair.

    Args:
        images: (B, C, *spatial)
        annotations: (B, R, *spatial)

    Returns:
        (B·R, C, *spatial) images and (B·R, *spatial) masks
    """
    annotations = np.asarray(annotations, dtype=np.float64)
    b, r = annotations.shape[:2]
    if b != images.shape[0]:
        raise InvalidArgumentError(f"{b} annotation sets for {images.shape[0]} images")
    repeated = ops.take(images, np.repeat(np.arange(b), r), axis=0)
    return repeated, annotations.reshape((b * r,) + annotations.shape[2:])


class SegmentationModel(ABC):
    """
    Base class for all trainable segmentation models.

    Each model:
    - Owns its ModelParams and the configuration that shaped them
    - Turns a batch of images with R annotations each into a scalar loss
    - Produces M plausible probability maps per image
    - Produces one most-probable map per image
    - Saves itself to and restores itself from a checkpoint
    """

    kind: ModelKind

    def __init__(
        self,
        unet_cfg: UNetConfig,
        latent: LatentSpec,
        loss_spec: LossSpec,
        sinkhorn_cfg: Optional[SinkhornConfig] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        """
        Initialize the model.

        Args:
            unet_cfg: Backbone configuration
            latent: Latent size (ignored by latent-free families)
            loss_spec: Training objective
            sinkhorn_cfg: Solver settings for OT losses
            rng: Generator for the weight initialisation
        """
        self.unet_cfg = unet_cfg
        self.latent = latent
        self.loss_spec = loss_spec
        self.sinkhorn_cfg = sinkhorn_cfg or SinkhornConfig()
        self.params = self.init_params(rng if rng is not None else np.random.default_rng(0))
        logger.info(f"{self.kind.value} model initialised with {self.params.count()} weights")

    @abstractmethod
    def init_params(self, rng: np.random.Generator) -> ModelParams:
        """Draw fresh parameters"""
        pass

    @abstractmethod
    def loss(self, images: Tensor, annotations: np.ndarray, rng: np.random.Generator) -> Tensor:
        """
        Training objective for one batch.

        Args:
            images: (B, C, *spatial) images
            annotations: (B, R, *spatial) binary masks
            rng: Generator for every stochastic choice of the loss

        Returns:
            Scalar loss connected to ``self.params``
        """
        pass

    @abstractmethod
    def sample(self, x: Tensor, m: int, rng: np.random.Generator) -> np.ndarray:
        """(M, N, *spatial) plausible probability maps"""
        pass

    @abstractmethod
    def most_probable(self, x: Tensor) -> np.ndarray:
        """(N, *spatial) deterministic probability map"""
        pass

    def describe(self) -> Dict[str, Any]:
        """JSON-ready configuration used as checkpoint metadata"""
        loss = asdict(self.loss_spec)
        loss["kind"] = self.loss_spec.kind.value
        return {
            "model": self.kind.value,
            "unet": asdict(self.unet_cfg),
            "latent": asdict(self.latent),
            "loss": loss,
            "sinkhorn": asdict(self.sinkhorn_cfg),
        }

    def save(self, path: Union[str, Path], extra_tensors: Optional[Dict[str, np.ndarray]] = None,
             extra_meta: Optional[Dict[str, Any]] = None) -> Path:
        tensors = self.params.to_arrays()
        tensors.update(extra_tensors or {})
        meta = self.describe()
        meta.update(extra_meta or {})
        return save_checkpoint(path, tensors, meta)

    def load_params(self, tensors: Dict[str, np.ndarray]) -> None:
        """Load parameter arrays, ignoring optimizer entries stored alongside them"""
        self.params.load_arrays({k: v for k, v in tensors.items() if not k.startswith("adam.")})


class ProbUNetModel(SegmentationModel):
    """Probabilistic U-Net trained with a pixelwise CE or FTL reconstruction term"""

    @property
    def kind(self) -> ModelKind:
        return ModelKind.PROBUNET_CE if self.loss_spec.kind is LossKind.CE else ModelKind.PROBUNET_FTL

    def init_params(self, rng):
        return prob_unet.init_params(self.unet_cfg, self.latent, rng)

    def loss(self, images, annotations, rng):
        x, y = expand_pairs(images, annotations)
        return prob_unet.probunet_loss(x, y, self.params, self.unet_cfg, self.loss_spec, rng)

    def sample(self, x, m, rng):
        return prob_unet.sample_from_prior(x, self.params, self.unet_cfg, m, rng)

    def most_probable(self, x):
        return prob_unet.most_probable_map(x, self.params, self.unet_cfg)


class PulaskiModel(ProbUNetModel):
    """The same cVAE trained with a distance between segmentation distributions"""

    @property
    def kind(self) -> ModelKind:
        return {
            LossKind.SINKHORN: ModelKind.PULASKI_SINKHORN,
            LossKind.HAUSDORFF: ModelKind.PULASKI_HAUSDORFF,
            LossKind.FRECHET: ModelKind.PULASKI_FRECHET,
        }[self.loss_spec.kind]

    def loss(self, images, annotations, rng):
        return batch_pulaski_loss(
            images, annotations, self.params, self.unet_cfg, self.loss_spec, self.sinkhorn_cfg, rng
        )


class SSNModel(SegmentationModel):
    """Low-rank logit-Gaussian head on the shared backbone"""

    kind = ModelKind.SSN

    def init_params(self, rng):
        return ssn.init_params(self.unet_cfg, self.loss_spec.ssn_rank, rng)

    def loss(self, images, annotations, rng):
        x, y = expand_pairs(images, annotations)
        return ssn.ssn_loss(x, y, self.params, self.unet_cfg, self.loss_spec.ssn_rank,
                            self.loss_spec.m_samples, rng)

    def sample(self, x, m, rng):
        return ssn.ssn_sample(x, self.params, self.unet_cfg, self.loss_spec.ssn_rank, m, rng)

    def most_probable(self, x):
        return ssn.ssn_mean_map(x, self.params, self.unet_cfg, self.loss_spec.ssn_rank)


class MCDropoutModel(SegmentationModel):
    """U-Net with spatial dropout kept active for sampling"""

    kind = ModelKind.MCDO

    def __init__(self, unet_cfg: UNetConfig, *args, **kwargs):
        if unet_cfg.dropout_rate == 0.0:
            unet_cfg = replace(unet_cfg, dropout_rate=mcdo.DEFAULT_RATE)
        super().__init__(unet_cfg, *args, **kwargs)

    def init_params(self, rng):
        return mcdo.init_params(self.unet_cfg, rng)

    def loss(self, images, annotations, rng):
        x, y = expand_pairs(images, annotations)
        return mcdo.mcdo_loss(x, y, self.params, self.unet_cfg, rng)

    def sample(self, x, m, rng):
        return mcdo.mcdo_sample(x, self.params, self.unet_cfg, self.unet_cfg.dropout_rate, m, rng)

    def most_probable(self, x):
        return mcdo.mcdo_mean_map(x, self.params, self.unet_cfg)


MODEL_CLASSES = {
    ModelKind.PULASKI_SINKHORN: PulaskiModel,
    ModelKind.PULASKI_HAUSDORFF: PulaskiModel,
    ModelKind.PULASKI_FRECHET: PulaskiModel,
    ModelKind.PROBUNET_CE: ProbUNetModel,
    ModelKind.PROBUNET_FTL: ProbUNetModel,
    ModelKind.MCDO: MCDropoutModel,
    ModelKind.SSN: SSNModel,
}


def build_model(
    kind: Union[ModelKind, str],
    unet_cfg: Optional[UNetConfig] = None,
    latent: Optional[LatentSpec] = None,
    loss_spec: Optional[LossSpec] = None,
    sinkhorn_cfg: Optional[SinkhornConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> SegmentationModel:
    """
    Create a model of the requested family.

    The loss kind is forced to the family's own objective, so a shared
    ``LossSpec`` (β, M, FTL parameters, ...) can be reused across families.

    Args:
        kind: Model family or its command-line name
        unet_cfg: Backbone configuration
        latent: Latent size
        loss_spec: Training objective settings
        sinkhorn_cfg: Solver settings for OT losses
        rng: Generator for the weight initialisation

    Returns:
        Freshly initialised model
    """
    if isinstance(kind, str):
        try:
            kind = ModelKind(kind)
        except ValueError:
            names = ", ".join(k.value for k in ModelKind)
            raise InvalidArgumentError(f"unknown model '{kind}' (expected one of {names})") from None
    loss_spec = replace(loss_spec or LossSpec(), kind=kind.default_loss)
    cls = MODEL_CLASSES[kind]
    return cls(unet_cfg or UNetConfig(), latent or LatentSpec(), loss_spec, sinkhorn_cfg, rng)


def model_from_meta(meta: Dict[str, Any]) -> SegmentationModel:
    """Rebuild an untrained model from checkpoint metadata"""
    try:
        loss = dict(meta["loss"])
        return build_model(
            meta["model"],
            UNetConfig(**meta["unet"]),
            LatentSpec(**meta["latent"]),
            LossSpec(**loss),
            SinkhornConfig(**meta["sinkhorn"]),
        )
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"checkpoint metadata is incomplete: {e}") from e


def load_model(path: Union[str, Path]) -> Tuple[SegmentationModel, Dict[str, Any]]:
    """
    Restore a model saved with ``SegmentationModel.save``.

    Returns:
        (model with loaded parameters, checkpoint metadata)
    """
    tensors, meta = load_checkpoint(path)
    model = model_from_meta(meta)
    model.load_params(tensors)
    logger.info(f"loaded {model.kind.value} model from {path}")
    return model, meta

