"""Generate a synthetic multi-rater dataset into the run's data directory."""

import logging

from commands.manifest import RunManifest
from config.settings import RunConfig
from datagen.synthetic import generate_dataset
from datagen.volume_io import save_dataset

logger = logging.getLogger(__name__)


def cmd_gen(cfg: RunConfig) -> RunManifest:
    """
    Write the dataset described by ``cfg.data`` to ``cfg.data_dir``.

    Returns:
        The written RunManifest; its metrics hold the split sizes
    """
    manifest = RunManifest.start("gen", cfg)
    dataset = generate_dataset(cfg.data)
    save_dataset(dataset, cfg.data_dir, cfg.data)
    manifest.metrics = {
        "volumes": len(dataset.volumes),
        **{f"{name}_volumes": len(idx) for name, idx in dataset.splits.items()},
    }
    manifest.finish(cfg, outputs=[cfg.data_dir])
    logger.info(f"dataset ready in {cfg.data_dir}: {manifest.metrics}")
    return manifest
