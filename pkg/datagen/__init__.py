"""Synthetic multi-rater data, slicing, patching and volume files."""
from .synthetic import (
    AnnotatedVolume,
    SyntheticDataset,
    SyntheticSpec,
    extract_slices,
    generate_dataset,
    stack_slices,
    truncated_normal,
)
from .patching import PatchSpec, extract_patches, patch_positions, stitch_overlap_average, volume_patches
from .volume_io import PayloadKind, load_dataset, read_volume, save_dataset, write_volume

__all__ = [
    "AnnotatedVolume",
    "SyntheticDataset",
    "SyntheticSpec",
    "extract_slices",
    "generate_dataset",
    "stack_slices",
    "truncated_normal",
    "PatchSpec",
    "extract_patches",
    "patch_positions",
    "stitch_overlap_average",
    "volume_patches",
    "PayloadKind",
    "load_dataset",
    "read_volume",
    "save_dataset",
    "write_volume",
]
