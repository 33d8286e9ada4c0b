"""
Draw M plausible segmentations per image from a trained checkpoint.

For every image of the configured split the command writes, under
``predictions/<model>/<image id>/``:

- ``prob_XX.pvol``: the M probability maps
- ``mask_XX.pvol``: each map binarized with its own Otsu threshold
- ``most_probable.pvol`` and ``most_probable_mask.pvol``: the deterministic
  prediction and its 0.5 threshold
"""

import json
import logging
from pathlib import Path
from typing import List, Tuple

import numpy as np

from commands.manifest import RunManifest
from common.errors import CheckpointError
from config.settings import RunConfig
from datagen.patching import extract_patches, stitch_overlap_average
from datagen.volume_io import PayloadKind, load_dataset, write_volume
from engine.tensor import Tensor
from models.base_model import SegmentationModel, load_model
from segmentation.seg_ops import binarize, segment_samples

logger = logging.getLogger(__name__)

SAMPLE_STREAM = 2
INDEX_FILE = "predictions.json"


def check_compatible(meta: dict, cfg: RunConfig, path: Path) -> None:
    """Checkpoint metadata must describe the configured model family and dimensionality"""
    if meta.get("model") != cfg.run.model:
        raise CheckpointError(f"{path} holds a '{meta.get('model')}' model, the run is configured for '{cfg.run.model}'")
    dims = meta.get("unet", {}).get("spatial_dims")
    if dims != cfg.run.dims:
        raise CheckpointError(f"{path} holds a {dims}D model, the run is configured for {cfg.run.dims}D")


def _predict(model: SegmentationModel, x: np.ndarray, m: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """(M, N, *spatial) samples and (N, *spatial) most probable maps of a (N, *spatial) batch"""
    batch = Tensor(x[:, None].astype(np.float64))
    return model.sample(batch, m, rng), model.most_probable(batch)


def predict_image(model: SegmentationModel, image: np.ndarray, cfg: RunConfig,
                  rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Probability samples and the most probable map of one image or volume.

    Args:
        model: Trained model
        image: 2D image, or a volume (sliced along axis 0 for 2D models,
            patched and stitched for 3D models)
        cfg: Run configuration
        rng: Sampling generator

    Returns:
        (M, *image.shape) samples and the (*image.shape) most probable map
    """
    m = cfg.sample.m
    if cfg.run.dims == 2:
        if image.ndim == 2:
            samples, best = _predict(model, image[None], m, rng)
            return samples[:, 0], best[0]
        return _predict(model, image, m, rng)

    sampled: List[Tuple[np.ndarray, tuple]] = []
    deterministic: List[Tuple[np.ndarray, tuple]] = []
    for patch, position in extract_patches(image, cfg.sample.patch_spec):
        samples, best = _predict(model, patch[None], m, rng)
        sampled.append((samples[:, 0], position))
        deterministic.append((best[0], position))
    return stitch_overlap_average(sampled, image.shape), stitch_overlap_average(deterministic, image.shape)


def write_prediction(out_dir: Path, samples: np.ndarray, masks: np.ndarray, best: np.ndarray) -> None:
    width = max(2, len(str(len(samples) - 1)))
    for k, (prob, mask) in enumerate(zip(samples, masks)):
        write_volume(out_dir / f"prob_{k:0{width}d}.pvol", prob, PayloadKind.IMAGE)
        write_volume(out_dir / f"mask_{k:0{width}d}.pvol", mask, PayloadKind.MASK)
    write_volume(out_dir / "most_probable.pvol", best, PayloadKind.IMAGE)
    write_volume(out_dir / "most_probable_mask.pvol", binarize(best, 0.5), PayloadKind.MASK)


def cmd_sample(cfg: RunConfig) -> RunManifest:
    """
    Sample every image of ``cfg.sample.split`` with the configured checkpoint.

    Returns:
        The written RunManifest
    """
    checkpoint = cfg.train_dir() / cfg.sample.checkpoint
    model, meta = load_model(checkpoint)
    check_compatible(meta, cfg, checkpoint)
    dataset = load_dataset(cfg.data_dir)
    volumes = dataset.split(cfg.sample.split)

    manifest = RunManifest.start("sample", cfg, inputs=[cfg.data_dir, checkpoint])
    out_dir = cfg.predictions_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    index = []
    for i, volume in enumerate(volumes):
        rng = np.random.default_rng([cfg.run.seed, SAMPLE_STREAM, i])
        samples, best = predict_image(model, volume.image, cfg, rng)
        samples = np.clip(samples, 0.0, 1.0)
        best = np.clip(best, 0.0, 1.0)
        masks = segment_samples(samples, cfg.sample.bins)
        write_prediction(out_dir / volume.id, samples, masks, best)
        index.append(volume.id)
        logger.info(f"{volume.id}: {cfg.sample.m} samples, mean foreground {masks.mean():.4f}")

    with open(out_dir / INDEX_FILE, "w") as f:
        json.dump({
            "model": cfg.run.model,
            "checkpoint": str(checkpoint),
            "epoch": meta.get("epoch"),
            "split": cfg.sample.split,
            "m": cfg.sample.m,
            "images": index,
        }, f, indent=2)
    manifest.metrics = {"images": len(index), "samples_per_image": cfg.sample.m}
    manifest.finish(cfg, outputs=[out_dir])
    return manifest
