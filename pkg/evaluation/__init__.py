"""Energy distance, inter-rater agreement and paired significance tests."""
from .metrics import iou, pairwise_distance, ged_squared, roi_union
from .krippendorff import coincidence_matrix, krippendorff_alpha
from .wilcoxon import WilcoxonResult, wilcoxon_signed_rank
from .report import MetricsReport, image_metrics, annotation_metrics, write_pgm, write_roo_maps, read_pgm

__all__ = [
    "iou",
    "pairwise_distance",
    "ged_squared",
    "roi_union",
    "coincidence_matrix",
    "krippendorff_alpha",
    "WilcoxonResult",
    "wilcoxon_signed_rank",
    "MetricsReport",
    "image_metrics",
    "annotation_metrics",
    "write_pgm",
    "write_roo_maps",
    "read_pgm",
]
