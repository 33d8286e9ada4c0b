"""Thresholding, argmax labelling and rate-of-occurrence maps."""
from .seg_ops import (
    otsu_threshold,
    between_class_variance,
    binarize,
    argmax_labels,
    check_masks,
    rate_of_occurrence,
    segment_samples,
)

__all__ = [
    "otsu_threshold",
    "between_class_variance",
    "binarize",
    "argmax_labels",
    "check_masks",
    "rate_of_occurrence",
    "segment_samples",
]
