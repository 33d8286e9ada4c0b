"""
Score sampled segmentations against the annotations.

Each prediction directory is one method. The report holds per-image GED²
and Kα records for every method plus an ``annotations`` reference row, the
method summaries, and pairwise Wilcoxon tests on GED when several methods are
evaluated together.
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from commands.manifest import RunManifest
from common.errors import InvalidArgumentError
from config.settings import RunConfig
from datagen.synthetic import AnnotatedVolume
from datagen.volume_io import load_dataset, read_mask
from evaluation.report import ANNOTATION_ROW, MetricsReport, annotation_metrics, image_metrics, write_roo_maps
from segmentation.seg_ops import rate_of_occurrence

logger = logging.getLogger(__name__)


def method_dirs(cfg: RunConfig) -> Dict[str, Path]:
    """Method name → prediction directory; repeated names get a numeric suffix"""
    dirs = [cfg.predictions_dir(m) for m in cfg.eval.methods]
    dirs += [Path(d) for d in cfg.eval.prediction_dirs]
    if not dirs:
        dirs = [cfg.predictions_dir()]
    named: Dict[str, Path] = {}
    for path in dirs:
        name, n = path.name, 2
        while name in named or name == ANNOTATION_ROW:
            name = f"{path.name}-{n}"
            n += 1
        named[name] = path
    return named


def load_sample_masks(pred_dir: Path, image_id: str) -> np.ndarray:
    files = sorted((pred_dir / image_id).glob("mask_*.pvol"))
    return np.stack([read_mask(f) for f in files])


def check_complete(named: Dict[str, Path], volumes: Sequence[AnnotatedVolume]) -> None:
    """Every method must hold at least two sample masks for every image"""
    missing: List[str] = []
    for name, path in named.items():
        for volume in volumes:
            if len(list((path / volume.id).glob("mask_*.pvol"))) < 2:
                missing.append(f"{name}/{volume.id}")
    if missing:
        raise InvalidArgumentError(f"missing predictions ({len(missing)}): {', '.join(missing)}")


def cmd_eval(cfg: RunConfig) -> RunManifest:
    """
    Evaluate every configured method on ``cfg.eval.split``.

    Returns:
        The written RunManifest; its metrics hold the method summaries
    """
    dataset = load_dataset(cfg.data_dir)
    volumes = dataset.split(cfg.eval.split)
    named = method_dirs(cfg)
    check_complete(named, volumes)

    manifest = RunManifest.start("eval", cfg, inputs=[cfg.data_dir, *named.values()])
    report = MetricsReport()
    roo_dir = cfg.eval_dir / "roo"
    for volume in volumes:
        report.add(ANNOTATION_ROW, annotation_metrics(volume.annotations, volume.id))
        if cfg.eval.write_roo:
            write_roo_maps(roo_dir / ANNOTATION_ROW / volume.id, rate_of_occurrence(volume.annotations))
    for name, path in named.items():
        for volume in volumes:
            masks = load_sample_masks(path, volume.id)
            record = image_metrics(
                masks, volume.annotations, volume.id,
                cross_pairs=cfg.eval.cross_pairs, within_pairs=cfg.eval.within_pairs,
            )
            report.add(name, record)
            if cfg.eval.write_roo:
                write_roo_maps(roo_dir / name / volume.id, rate_of_occurrence(masks))
        summary = report.frame(name)
        logger.info(f"{name}: GED² {summary['ged'].mean():.4f}, Kα {100 * summary['kalpha_all'].mean():.2f}")

    written = report.write(cfg.eval_dir)
    manifest.metrics = {
        "summary": report.summary().to_dict(orient="records"),
        "wilcoxon": report.compare().to_dict(orient="records"),
    }
    manifest.finish(cfg, outputs=written)
    return manifest
