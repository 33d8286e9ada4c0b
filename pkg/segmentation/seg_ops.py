"""
From probabilities and logits to binary segmentations.

Otsu's threshold maximises the between-class variance of a histogram of the
probability map; thresholding is inclusive (p ≥ τ). Argmax labelling breaks
ties toward background.
"""

import logging
from typing import Sequence

import numpy as np

from common.errors import DegenerateHistogramError, InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_BINS = 256


def _probability_map(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0:
        raise InvalidArgumentError("probability map is empty")
    if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
        raise InvalidArgumentError("probability map must be finite with values in [0, 1]")
    return p


def between_class_variance(hist: np.ndarray) -> np.ndarray:
    """
    w₀w₁(μ₀ − μ₁)² for the split before every inner bin edge.

    Args:
        hist: Counts of ``bins`` equal-width bins on [0, 1]

    Returns:
        Array of length bins − 1; entry k − 1 belongs to edge k / bins. Splits
        with an empty side get −inf.
    """
    bins = hist.size
    centers = (np.arange(bins) + 0.5) / bins
    total = hist.sum()
    w0 = np.cumsum(hist)[:-1].astype(np.float64)
    s0 = np.cumsum(hist * centers)[:-1]
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    out = np.full(bins - 1, -np.inf)
    m0 = s0[valid] / w0[valid]
    m1 = (np.dot(hist, centers) - s0[valid]) / w1[valid]
    out[valid] = (w0[valid] / total) * (w1[valid] / total) * (m0 - m1) ** 2
    return out


def otsu_threshold(p, bins: int = DEFAULT_BINS) -> float:
    """
    Otsu threshold of a probability map.

    The threshold is a bin edge of the histogram. Edges inside one
    contiguous run of maximal between-class variance split the voxels the
    same way; the run's middle edge is taken, rounding toward the lower
    one. Of several separate maximal runs the lowest wins.

    Args:
        p: Probability map of any shape
        bins: Histogram bins on [0, 1]

    Returns:
        τ = k / bins for the chosen inner edge k
    """
    if bins < 2:
        raise InvalidArgumentError(f"bins must be at least 2, got {bins}")
    values = _probability_map(p).ravel()
    hist, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    if np.count_nonzero(hist) < 2:
        raise DegenerateHistogramError(
            f"histogram of {values.size} voxels populates a single bin; no threshold separates them"
        )

    variance = between_class_variance(hist)
    best = variance.max()
    first = int(np.argmax(variance == best))
    last = first
    while last + 1 < variance.size and variance[last + 1] == best:
        last += 1
    return float(edges[(first + last) // 2 + 1])


def binarize(p, tau: float) -> np.ndarray:
    """s = 1 where p ≥ τ, τ ∈ (0, 1)"""
    if not 0.0 < tau < 1.0:
        raise InvalidArgumentError(f"threshold must lie in (0, 1), got {tau}")
    return (_probability_map(p) >= tau).astype(np.uint8)


def argmax_labels(logits, channel_axis: int = 0) -> np.ndarray:
    """Label 1 where η₁ > η₀; ties go to 0"""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[channel_axis] != 2:
        raise InvalidArgumentError(f"argmax labelling needs 2 logit channels, got shape {logits.shape}")
    eta0 = np.take(logits, 0, axis=channel_axis)
    eta1 = np.take(logits, 1, axis=channel_axis)
    return (eta1 > eta0).astype(np.uint8)


def check_masks(masks: Sequence) -> np.ndarray:
    """Stack binary masks of equal shape into one (R, *spatial) array"""
    if len(masks) == 0:
        raise InvalidArgumentError("need at least one mask")
    shapes = {np.shape(m) for m in masks}
    if len(shapes) != 1:
        raise InvalidArgumentError(f"masks differ in shape: {sorted(shapes)}")
    stacked = np.stack([np.asarray(m, dtype=np.float64) for m in masks])
    if not np.all((stacked == 0) | (stacked == 1)):
        raise InvalidArgumentError("masks must be binary")
    return stacked


def rate_of_occurrence(masks: Sequence) -> np.ndarray:
    """Voxelwise fraction of masks labelling each voxel foreground"""
    return check_masks(masks).mean(axis=0)


def segment_samples(samples: np.ndarray, bins: int = DEFAULT_BINS) -> np.ndarray:
    """
    Binarize each probability map with its own Otsu threshold.

    Maps whose histogram is degenerate fall back to τ = 0.5.

    Args:
        samples: (M, *spatial) probability maps

    Returns:
        (M, *spatial) binary masks
    """
    out = []
    for m, sample in enumerate(samples):
        try:
            tau = otsu_threshold(sample, bins)
        except DegenerateHistogramError:
            logger.warning(f"sample {m}: degenerate histogram, thresholding at 0.5")
            tau = 0.5
        out.append(binarize(sample, tau))
    return np.stack(out)
