"""
Per-image metric records, method summaries, paired tests and RoO images.
"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from common.errors import InvalidArgumentError, UndefinedTestError
from evaluation.krippendorff import krippendorff_alpha
from evaluation.metrics import ged_squared
from evaluation.wilcoxon import WilcoxonResult, wilcoxon_signed_rank

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["image_id", "ged", "kalpha_all", "kalpha_roi"]
ANNOTATION_ROW = "annotations"


def _safe_roi_alpha(masks: np.ndarray, image_id: str) -> float:
    try:
        return krippendorff_alpha(masks, region="roi")
    except InvalidArgumentError:
        logger.warning(f"{image_id}: empty region of interest, Kα_ROI undefined")
        return float("nan")


def image_metrics(
    samples: np.ndarray,
    annotations: np.ndarray,
    image_id: str,
    cross_pairs: str = "all",
    within_pairs: str = "distinct",
) -> Dict[str, float]:
    """
    GED² of binarized samples against the annotations plus the samples' own Kα.

    Args:
        samples: (M, *spatial) binary masks from one method
        annotations: (R, *spatial) binary annotations
        image_id: Identifier stored in the record
        cross_pairs: Pairing of the GED cross term, see ``ged_squared``
        within_pairs: Pairing of the GED within terms

    Returns:
        Record with the ``METRIC_COLUMNS`` keys
    """
    return {
        "image_id": image_id,
        "ged": ged_squared(samples, annotations, cross_pairs=cross_pairs, within_pairs=within_pairs),
        "kalpha_all": krippendorff_alpha(samples, region="all"),
        "kalpha_roi": _safe_roi_alpha(samples, image_id),
    }


def annotation_metrics(annotations: np.ndarray, image_id: str) -> Dict[str, float]:
    """Agreement among the raters themselves; GED does not apply"""
    return {
        "image_id": image_id,
        "ged": float("nan"),
        "kalpha_all": krippendorff_alpha(annotations, region="all"),
        "kalpha_roi": _safe_roi_alpha(annotations, image_id),
    }


@dataclass
class MetricsReport:
    """
    Evaluation results of one or more methods on a common set of images.

    Kα is stored raw in [−1, 1]; ``summary`` reports it ×100.
    """
    records: Dict[str, List[Dict[str, float]]] = field(default_factory=dict)
    comparisons: Dict[Tuple[str, str], Optional[WilcoxonResult]] = field(default_factory=dict)

    def add(self, method: str, record: Dict[str, float]) -> None:
        self.records.setdefault(method, []).append(record)

    def frame(self, method: str) -> pd.DataFrame:
        return pd.DataFrame(self.records.get(method, []), columns=METRIC_COLUMNS)

    @property
    def methods(self) -> List[str]:
        return list(self.records)

    def summary(self) -> pd.DataFrame:
        rows = []
        for method in self.methods:
            df = self.frame(method)
            rows.append({
                "method": method,
                "images": len(df),
                "ged_mean": df["ged"].mean(),
                "ged_std": df["ged"].std(ddof=0),
                "kalpha_all_mean": 100.0 * df["kalpha_all"].mean(),
                "kalpha_all_std": 100.0 * df["kalpha_all"].std(ddof=0),
                "kalpha_roi_mean": 100.0 * df["kalpha_roi"].mean(),
                "kalpha_roi_std": 100.0 * df["kalpha_roi"].std(ddof=0),
            })
        return pd.DataFrame(rows)

    def compare(self, metric: str = "ged") -> pd.DataFrame:
        """
        Paired Wilcoxon tests between every pair of methods on one metric.

        Pairs whose test is undefined are kept with a NaN p-value.
        """
        methods = [m for m in self.methods if m != ANNOTATION_ROW]
        rows = []
        for first, second in itertools.combinations(methods, 2):
            a = self.frame(first).set_index("image_id")[metric]
            b = self.frame(second).set_index("image_id")[metric]
            common = a.index.intersection(b.index)
            try:
                result = wilcoxon_signed_rank(a.loc[common].to_numpy(), b.loc[common].to_numpy())
            except UndefinedTestError as e:
                logger.warning(f"{first} vs {second} on {metric}: {e}")
                result = None
            self.comparisons[(first, second)] = result
            rows.append({
                "method_a": first,
                "method_b": second,
                "metric": metric,
                "statistic": result.statistic if result else float("nan"),
                "p_value": result.p_value if result else float("nan"),
                "n": result.n if result else 0,
                "test": result.method if result else "n/a",
            })
        return pd.DataFrame(rows, columns=["method_a", "method_b", "metric", "statistic", "p_value", "n", "test"])

    def write(self, out_dir: Path) -> List[Path]:
        """metrics_<method>.csv per method, summary.csv/.json and wilcoxon.csv"""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for method in self.methods:
            path = out_dir / f"metrics_{method}.csv"
            self.frame(method).to_csv(path, index=False)
            written.append(path)
        summary = out_dir / "summary.csv"
        self.summary().to_csv(summary, index=False)
        aggregate = out_dir / "summary.json"
        with open(aggregate, "w") as f:
            json.dump(self.summary().to_dict(orient="records"), f, indent=2)
        tests = out_dir / "wilcoxon.csv"
        self.compare().to_csv(tests, index=False)
        written += [summary, aggregate, tests]
        logger.info(f"metrics for {len(self.methods)} methods written to {out_dir}")
        return written


def display_slice(image: np.ndarray) -> np.ndarray:
    """2D images pass through; volumes show their central slice along axis 0"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim == 3:
        return image[image.shape[0] // 2]
    raise InvalidArgumentError(f"cannot display an array of shape {image.shape}")


def write_pgm(path: Path, image: np.ndarray) -> Path:
    """
    Binary 8-bit PGM of values in [0, 1].

    Args:
        path: Destination file
        image: 2D map, or a volume whose central slice is written

    Returns:
        The written path
    """
    plane = display_slice(image)
    if plane.size and (plane.min() < 0.0 or plane.max() > 1.0):
        raise InvalidArgumentError("PGM values must lie in [0, 1]")
    pixels = np.rint(plane * 255.0).astype(np.uint8)
    height, width = pixels.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
    return path


def write_roo_maps(stem: Path, roo: np.ndarray) -> List[Path]:
    """
    One PGM for a 2D map, one per slice along axis 0 for a volume.

    Args:
        stem: Path without suffix; slices get ``_s<index>`` appended
        roo: Rate of occurrence map in [0, 1]
    """
    stem = Path(stem)
    roo = np.asarray(roo, dtype=np.float64)
    if roo.ndim == 2:
        return [write_pgm(stem.parent / f"{stem.name}.pgm", roo)]
    if roo.ndim != 3:
        raise InvalidArgumentError(f"RoO map must be 2D or 3D, got shape {roo.shape}")
    width = len(str(roo.shape[0] - 1))
    return [
        write_pgm(stem.parent / f"{stem.name}_s{i:0{width}d}.pgm", roo[i])
        for i in range(roo.shape[0])
    ]


def read_pgm(path: Path) -> np.ndarray:
    """Values of a file written by ``write_pgm`` scaled back to [0, 1]"""
    blob = Path(path).read_bytes()
    fields: Sequence[bytes] = blob.split(b"\n", 3)
    if len(fields) < 4 or fields[0] != b"P5":
        raise InvalidArgumentError(f"{path} is not a binary PGM")
    width, height = (int(v) for v in fields[1].split())
    pixels = np.frombuffer(fields[3], dtype=np.uint8, count=width * height)
    return pixels.reshape(height, width) / 255.0
