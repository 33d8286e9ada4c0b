"""
Train one model family on the generated dataset.

2D runs train on whole images, or on slices along axis 0 when the data are
volumes. 3D runs train on the overlapping patch grid of ``[sample]``.
"""

import logging
from typing import List, Sequence

import numpy as np

from commands.manifest import RunManifest
from config.settings import RunConfig
from datagen.patching import volume_patches
from datagen.synthetic import AnnotatedVolume, extract_slices
from datagen.volume_io import load_dataset
from models.base_model import build_model
from training.trainer import BEST_CHECKPOINT, HISTORY_FILE, TrainingData, train

logger = logging.getLogger(__name__)


def training_items(volumes: Sequence[AnnotatedVolume], cfg: RunConfig) -> List[AnnotatedVolume]:
    """Slices, images or patches the model of ``cfg`` trains on"""
    items: List[AnnotatedVolume] = []
    for volume in volumes:
        if cfg.run.dims == 3:
            items.extend(volume_patches(volume, cfg.sample.patch_spec))
        elif volume.image.ndim == 3:
            items.extend(extract_slices(volume, axis=0))
        else:
            items.append(volume)
    return items


def training_data(volumes: Sequence[AnnotatedVolume], cfg: RunConfig) -> TrainingData:
    items = training_items(volumes, cfg)
    images = np.stack([item.image for item in items])[:, None]
    annotations = np.stack([item.annotations for item in items])
    return TrainingData(images, annotations)


def cmd_train(cfg: RunConfig, resume: bool = False) -> RunManifest:
    """
    Fit the configured model and keep its best-validation checkpoint.

    Args:
        cfg: Run configuration
        resume: Continue from the ``last`` checkpoint of a previous run

    Returns:
        The written RunManifest with per-epoch history and the best validation loss
    """
    dataset = load_dataset(cfg.data_dir)
    manifest = RunManifest.start("train", cfg, inputs=[cfg.data_dir])
    train_data = training_data(dataset.split("train"), cfg)
    val_data = training_data(dataset.split("val"), cfg)
    logger.info(f"training {cfg.run.model} on {len(train_data)} samples, validating on {len(val_data)}")

    model = build_model(
        cfg.run.kind, cfg.unet, cfg.latent, cfg.loss, cfg.sinkhorn, rng=np.random.default_rng(cfg.run.seed)
    )
    out_dir = cfg.train_dir()
    result = train(model, train_data, val_data, cfg.train, cfg.optimizer, out_dir=out_dir, resume=resume)

    manifest.history = result.history.records
    manifest.metrics = {
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss if np.isfinite(result.best_val_loss) else None,
        "final_val_loss": result.history.records[-1]["val_loss"] if result.history.records else None,
    }
    manifest.finish(cfg, outputs=[out_dir / BEST_CHECKPOINT, out_dir / HISTORY_FILE])
    return manifest
