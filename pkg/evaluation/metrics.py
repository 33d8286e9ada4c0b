"""
Distribution-level comparison of segmentation sets.

The generalized energy distance uses d(a, b) = 1 − IoU(a, b):

    GED² = 2·E[d(s, y)] − E[d(s, s′)] − E[d(y, y′)]
"""

import logging
from typing import Sequence

import numpy as np

from common.errors import InsufficientSamplesError, InvalidArgumentError
from segmentation.seg_ops import check_masks

logger = logging.getLogger(__name__)

CROSS_PAIRS = ("all", "distinct")
WITHIN_PAIRS = ("distinct", "all")


def iou(s, y) -> float:
    """|s ∩ y| / |s ∪ y|; two empty masks score 1"""
    s = np.asarray(s).astype(bool)
    y = np.asarray(y).astype(bool)
    if s.shape != y.shape:
        raise InvalidArgumentError(f"mask shapes differ: {s.shape} vs {y.shape}")
    union = np.logical_or(s, y).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(s, y).sum() / union)


def pairwise_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    1 − IoU between every mask of ``a`` and every mask of ``b``.

    Args:
        a: (n, *spatial) binary masks
        b: (m, *spatial) binary masks

    Returns:
        (n, m) distance matrix
    """
    fa = a.reshape(a.shape[0], -1).astype(np.float64)
    fb = b.reshape(b.shape[0], -1).astype(np.float64)
    inter = fa @ fb.T
    union = fa.sum(axis=1)[:, None] + fb.sum(axis=1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        score = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 1.0)
    return 1.0 - score


def _within(dist: np.ndarray, convention: str) -> float:
    n = dist.shape[0]
    if convention == "all":
        return float(dist.mean())
    if n < 2:
        return 0.0
    return float((dist.sum() - np.trace(dist)) / (n * (n - 1)))


def ged_squared(
    samples: Sequence,
    annotations: Sequence,
    cross_pairs: str = "all",
    within_pairs: str = "distinct",
    allow_singleton: bool = False,
) -> float:
    """
    Squared generalized energy distance between two mask sets.

    Args:
        samples: Predicted masks S
        annotations: Reference masks Y
        cross_pairs: ``all`` averages d over the |S|·|Y| pairs; ``distinct``
            pairs index i with j ≠ i and needs |S| = |Y|
        within_pairs: ``distinct`` averages over ordered pairs i ≠ j, ``all``
            includes the zero self-distances
        allow_singleton: Accept sets of one mask (their within term is 0)

    Returns:
        GED²
    """
    if cross_pairs not in CROSS_PAIRS:
        raise InvalidArgumentError(f"cross_pairs must be one of {CROSS_PAIRS}, got '{cross_pairs}'")
    if within_pairs not in WITHIN_PAIRS:
        raise InvalidArgumentError(f"within_pairs must be one of {WITHIN_PAIRS}, got '{within_pairs}'")
    s = check_masks(samples)
    y = check_masks(annotations)
    if s.shape[1:] != y.shape[1:]:
        raise InvalidArgumentError(f"sample shape {s.shape[1:]} differs from annotation shape {y.shape[1:]}")
    minimum = 1 if allow_singleton else 2
    if len(s) < minimum or len(y) < minimum:
        raise InsufficientSamplesError(f"GED needs at least {minimum} masks per set, got {len(s)} and {len(y)}")

    cross = pairwise_distance(s, y)
    if cross_pairs == "distinct":
        if len(s) != len(y):
            raise InvalidArgumentError("index-paired cross terms need sets of equal size")
        cross_term = _within(cross, "distinct")
    else:
        cross_term = float(cross.mean())

    value = 2.0 * cross_term - _within(pairwise_distance(s, s), within_pairs) \
        - _within(pairwise_distance(y, y), within_pairs)
    if value < -1e-9:
        logger.warning(f"GED² evaluated to {value:.3e}")
    return value


def roi_union(masks: Sequence) -> np.ndarray:
    """Voxels labelled foreground by at least one mask"""
    return check_masks(masks).max(axis=0).astype(np.uint8)
