"""
Nominal Krippendorff's alpha for binary masks.

Every voxel is a unit rated by all raters. With n₀ and n₁ the totals of each
label over the pairable values and o₀₁ the off-diagonal coincidence count,

    α = 1 − D_o / D_e = 1 − (n − 1)·o₀₁ / (n₀·n₁)
"""

import logging
from typing import Sequence

import numpy as np

from common.errors import InsufficientSamplesError, InvalidArgumentError
from segmentation.seg_ops import check_masks

logger = logging.getLogger(__name__)

REGIONS = ("all", "roi")


def coincidence_matrix(ratings: np.ndarray) -> np.ndarray:
    """
    2×2 coincidence matrix of binary ratings.

    Args:
        ratings: (raters, units) array of 0/1 labels

    Returns:
        o[c, k] summed over units of (#ordered c-k pairs) / (raters − 1)
    """
    m = ratings.shape[0]
    ones = ratings.sum(axis=0)
    zeros = m - ones
    scale = 1.0 / (m - 1)
    off = float(np.sum(ones * zeros)) * scale
    return np.array([
        [float(np.sum(zeros * (zeros - 1))) * scale, off],
        [off, float(np.sum(ones * (ones - 1))) * scale],
    ])


def alpha_from_ratings(ratings: np.ndarray) -> float:
    o = coincidence_matrix(ratings)
    totals = o.sum(axis=1)
    n = totals.sum()
    expected = totals[0] * totals[1]
    if expected == 0:
        logger.warning("all ratings share one label; expected disagreement is 0, reporting alpha = 1")
        return 1.0
    return float(1.0 - (n - 1.0) * o[0, 1] / expected)


def krippendorff_alpha(masks: Sequence, region: str = "all") -> float:
    """
    Agreement among R binary masks of one image.

    Args:
        masks: R ≥ 2 equally shaped binary masks (one per rater or sample)
        region: ``all`` voxels, or ``roi`` for the voxels at least one mask
            labels foreground

    Returns:
        α in [−1, 1]
    """
    if region not in REGIONS:
        raise InvalidArgumentError(f"region must be one of {REGIONS}, got '{region}'")
    stacked = check_masks(masks)
    if len(stacked) < 2:
        raise InsufficientSamplesError(f"Krippendorff's alpha needs at least 2 masks, got {len(stacked)}")
    ratings = stacked.reshape(len(stacked), -1)
    if region == "roi":
        keep = ratings.max(axis=0) > 0
        if not keep.any():
            raise InvalidArgumentError("the region of interest is empty: no mask has a foreground voxel")
        ratings = ratings[:, keep]
    return alpha_from_ratings(ratings)
