"""
Synthetic multi-annotator datasets.

Each volume holds one clean structure mask (curved tubes standing in for
vessels, ellipsoidal blobs for lesions), an image made from the smoothed mask
plus Gaussian noise, and R rater masks. A rater grows or shrinks the clean
mask by a signed radius drawn from a truncated normal and then flips boundary
voxels independently.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, stats

from common.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

STRUCTURES = ("tubes", "blobs")
SPLIT_RATIO = (9, 2, 4)
MIN_EXTENT = 8
MIN_ACCEPTANCE_MASS = 1e-12


@dataclass
class SyntheticSpec:
    """
    Generator settings.

    The rater radius is negative for erosion and positive for dilation, in
    voxels; ``flip_prob`` applies to voxels on a rater mask's boundary.
    """
    extents: Tuple[int, ...] = (32, 32)
    n_images: int = 15
    n_raters: int = 5
    structure: str = "tubes"
    n_structures: int = 1
    tube_radius: float = 1.0
    tube_curvature: float = 0.15
    blob_axes: Tuple[float, float] = (2.0, 4.0)
    radius_mean: float = -0.25
    radius_sd: float = 1.25
    radius_low: float = -2.0
    radius_high: float = 2.0
    flip_prob: float = 0.3
    smoothing: float = 1.0
    noise_sd: float = 0.15
    seed: int = 7

    def __post_init__(self):
        self.extents = tuple(int(e) for e in self.extents)
        self.blob_axes = tuple(float(a) for a in self.blob_axes)
        if len(self.extents) not in (2, 3):
            raise InvalidArgumentError(f"extents must be 2D or 3D, got {self.extents}")
        if min(self.extents) < MIN_EXTENT:
            raise InvalidArgumentError(f"extents {self.extents} too small; every axis needs at least {MIN_EXTENT} voxels")
        if self.n_images < len(SPLIT_RATIO):
            raise InvalidArgumentError(f"n_images must be at least {len(SPLIT_RATIO)}, got {self.n_images}")
        if self.n_raters < 2:
            raise InvalidArgumentError(f"n_raters must be at least 2, got {self.n_raters}")
        if self.structure not in STRUCTURES:
            raise InvalidArgumentError(f"structure must be one of {STRUCTURES}, got '{self.structure}'")
        if self.n_structures < 1:
            raise InvalidArgumentError(f"n_structures must be at least 1, got {self.n_structures}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise InvalidArgumentError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")
        for name in ("radius_sd", "noise_sd", "smoothing", "tube_curvature"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if not self.radius_low < self.radius_high:
            raise InvalidArgumentError("radius_low must be below radius_high")
        if self.tube_radius <= 0 or not 0 < self.blob_axes[0] <= self.blob_axes[1]:
            raise InvalidArgumentError("structure sizes must be positive")
        if 2 * self.blob_axes[1] >= min(self.extents):
            raise InvalidArgumentError(f"blob axes {self.blob_axes} do not fit in extents {self.extents}")

    @property
    def spatial_dims(self) -> int:
        return len(self.extents)


@dataclass
class AnnotatedVolume:
    """An image with its rater masks; ``clean`` is the structure they all started from"""
    id: str
    image: np.ndarray
    annotations: np.ndarray
    clean: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.annotations.shape[1:] != self.image.shape:
            raise InvalidArgumentError(
                f"{self.id}: annotations {self.annotations.shape} do not match image {self.image.shape}"
            )

    @property
    def n_raters(self) -> int:
        return self.annotations.shape[0]


@dataclass
class SyntheticDataset:
    volumes: List[AnnotatedVolume]
    splits: Dict[str, List[int]] = field(default_factory=dict)

    def split(self, name: str) -> List[AnnotatedVolume]:
        if name not in self.splits:
            raise InvalidArgumentError(f"unknown split '{name}'")
        return [self.volumes[i] for i in self.splits[name]]


def truncated_normal(mean: float, sd: float, low: float, high: float, rng: np.random.Generator) -> float:
    """
    One draw from N(mean, sd²) restricted to [low, high] by rejection.

    Args:
        mean: Location of the untruncated normal
        sd: Its standard deviation; 0 returns ``mean`` clipped to the interval
        low: Lower bound
        high: Upper bound
        rng: Random generator

    Returns:
        The accepted draw
    """
    if not low < high:
        raise InvalidArgumentError(f"empty interval [{low}, {high}]")
    if sd < 0:
        raise InvalidArgumentError(f"sd must be nonnegative, got {sd}")
    if sd == 0:
        return float(np.clip(mean, low, high))
    mass = stats.norm.cdf((high - mean) / sd) - stats.norm.cdf((low - mean) / sd)
    if mass < MIN_ACCEPTANCE_MASS:
        raise InvalidArgumentError(
            f"[{low}, {high}] holds only {mass:.3e} of N({mean}, {sd}²); rejection sampling would not terminate"
        )
    while True:
        draw = rng.normal(mean, sd)
        if low <= draw <= high:
            return float(draw)


def _random_direction(dims: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dims)
    return v / np.linalg.norm(v)


def tube_centerline(extents: Sequence[int], curvature: float, rng: np.random.Generator) -> np.ndarray:
    """
    Boolean map of a random curved path through the volume.

    The path starts in the central half of the volume and walks in both
    directions with a slowly turning heading until it leaves the volume.
    """
    shape = np.array(extents)
    dims = len(shape)
    start = shape * (0.25 + 0.5 * rng.random(dims))
    heading = _random_direction(dims, rng)
    line = np.zeros(extents, dtype=bool)
    for sign in (1.0, -1.0):
        position, direction = start.copy(), sign * heading
        for _ in range(4 * int(shape.max())):
            index = np.floor(position).astype(int)
            if np.any(index < 0) or np.any(index >= shape):
                break
            line[tuple(index)] = True
            direction = direction + curvature * rng.normal(size=dims)
            direction /= np.linalg.norm(direction)
            position = position + 0.5 * direction
    return line


def tube_mask(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    line = np.zeros(spec.extents, dtype=bool)
    for _ in range(spec.n_structures):
        line |= tube_centerline(spec.extents, spec.tube_curvature, rng)
    return ndimage.distance_transform_edt(~line) <= spec.tube_radius


def blob_mask(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Union of axis-aligned ellipsoids with semi-axes drawn from ``blob_axes``"""
    grid = np.indices(spec.extents, dtype=np.float64)
    mask = np.zeros(spec.extents, dtype=bool)
    lo, hi = spec.blob_axes
    for _ in range(spec.n_structures):
        axes = rng.uniform(lo, hi, size=spec.spatial_dims)
        center = [rng.uniform(a, e - 1 - a) for a, e in zip(axes, spec.extents)]
        radius = sum(((g - c) / a) ** 2 for g, c, a in zip(grid, center, axes))
        mask |= radius <= 1.0
    return mask


def clean_mask(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    mask = tube_mask(spec, rng) if spec.structure == "tubes" else blob_mask(spec, rng)
    if not mask.any():
        raise InvalidArgumentError(f"extents {spec.extents} produced an empty structure")
    return mask


def rater_mask(clean: np.ndarray, radius: float, flip_prob: float, rng: np.random.Generator) -> np.ndarray:
    """
    Grow (radius > 0) or shrink (radius < 0) the clean mask, then flip boundary voxels.

    Returns:
        uint8 mask of the clean mask's shape
    """
    if radius >= 0:
        grown = ndimage.distance_transform_edt(~clean) <= radius
    else:
        grown = ndimage.distance_transform_edt(clean) > -radius
    boundary = ndimage.binary_dilation(grown) & ~ndimage.binary_erosion(grown)
    flips = boundary & (rng.random(clean.shape) < flip_prob)
    return (grown ^ flips).astype(np.uint8)


def synthesize_image(clean: np.ndarray, smoothing: float, noise_sd: float, rng: np.random.Generator) -> np.ndarray:
    image = ndimage.gaussian_filter(clean.astype(np.float64), smoothing) if smoothing > 0 else clean.astype(np.float64)
    return (image + noise_sd * rng.normal(size=clean.shape)).astype(np.float32)


def split_indices(n: int, rng: np.random.Generator) -> Dict[str, List[int]]:
    """Shuffled train/val/test indices in 9:2:4 proportions, each split non-empty"""
    total = sum(SPLIT_RATIO)
    n_val = max(1, round(n * SPLIT_RATIO[1] / total))
    n_test = max(1, round(n * SPLIT_RATIO[2] / total))
    n_train = n - n_val - n_test
    order = [int(i) for i in rng.permutation(n)]
    return {
        "train": sorted(order[:n_train]),
        "val": sorted(order[n_train:n_train + n_val]),
        "test": sorted(order[n_train + n_val:]),
    }


def generate_volume(spec: SyntheticSpec, index: int) -> AnnotatedVolume:
    """Volume ``index`` of the dataset; its generator derives from (seed, index)"""
    rng = np.random.default_rng([spec.seed, index])
    clean = clean_mask(spec, rng)
    image = synthesize_image(clean, spec.smoothing, spec.noise_sd, rng)
    annotations = np.stack([
        rater_mask(
            clean,
            truncated_normal(spec.radius_mean, spec.radius_sd, spec.radius_low, spec.radius_high, rng),
            spec.flip_prob,
            rng,
        )
        for _ in range(spec.n_raters)
    ])
    return AnnotatedVolume(f"img_{index:03d}", image, annotations, clean.astype(np.uint8))


def generate_dataset(spec: SyntheticSpec) -> SyntheticDataset:
    """
    All volumes of a synthetic dataset and their split assignment.

    Args:
        spec: Generator settings; equal settings give identical datasets

    Returns:
        SyntheticDataset with ``train``, ``val`` and ``test`` splits
    """
    volumes = [generate_volume(spec, i) for i in range(spec.n_images)]
    splits = split_indices(spec.n_images, np.random.default_rng([spec.seed, spec.n_images, 0]))
    foreground = np.mean([v.clean.mean() for v in volumes])
    logger.info(
        f"generated {spec.n_images} {spec.structure} volumes of {spec.extents} with {spec.n_raters} raters "
        f"(foreground {100 * foreground:.2f}%)"
    )
    return SyntheticDataset(volumes, splits)


def extract_slices(volume: AnnotatedVolume, axis: int = 0) -> List[AnnotatedVolume]:
    """
    2D samples along one axis of a 3D volume, annotations sliced alongside.

    Args:
        volume: 3D annotated volume
        axis: Slicing axis; 0 is the acquisition axis

    Returns:
        One AnnotatedVolume per index along ``axis``
    """
    if volume.image.ndim != 3:
        raise InvalidArgumentError(f"{volume.id}: slicing needs a 3D volume, got {volume.image.ndim}D")
    if not 0 <= axis < 3:
        raise InvalidArgumentError(f"axis must be 0, 1 or 2, got {axis}")
    width = len(str(volume.image.shape[axis] - 1))
    slices = []
    for i in range(volume.image.shape[axis]):
        clean = None if volume.clean is None else np.take(volume.clean, i, axis=axis)
        slices.append(AnnotatedVolume(
            f"{volume.id}_s{i:0{width}d}",
            np.take(volume.image, i, axis=axis),
            np.take(volume.annotations, i, axis=axis + 1),
            clean,
        ))
    return slices


def stack_slices(slices: Sequence[AnnotatedVolume], axis: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Image and annotations of a volume rebuilt from its slices"""
    image = np.stack([s.image for s in slices], axis=axis)
    annotations = np.stack([s.annotations for s in slices], axis=axis + 1)
    return image, annotations
