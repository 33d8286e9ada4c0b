"""
Overlapping patch grids and overlap-averaged reconstruction.

Positions along each axis step by the stride; when the grid does not end on
the boundary, one extra position is clamped so the last patch touches it.
Arrays may carry leading axes (channels, raters, samples); patching acts on
the trailing spatial axes.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from common.errors import CoverageError, InvalidArgumentError
from datagen.synthetic import AnnotatedVolume

logger = logging.getLogger(__name__)

Position = Tuple[int, ...]


@dataclass
class PatchSpec:
    extents: Tuple[int, ...] = (16, 16, 16)
    strides: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        self.extents = tuple(int(e) for e in self.extents)
        if self.strides is None:
            self.strides = tuple(max(1, e // 2) for e in self.extents)
        self.strides = tuple(int(s) for s in self.strides)
        if len(self.strides) != len(self.extents):
            raise InvalidArgumentError(f"strides {self.strides} do not match patch extents {self.extents}")
        for e, s in zip(self.extents, self.strides):
            if not 0 < s <= e:
                raise InvalidArgumentError(f"stride {s} must lie in (0, {e}]")


def axis_positions(length: int, extent: int, stride: int) -> List[int]:
    if extent > length:
        raise InvalidArgumentError(f"patch extent {extent} exceeds volume extent {length}")
    positions = list(range(0, length - extent + 1, stride))
    if positions[-1] + extent < length:
        positions.append(length - extent)
    return positions


def patch_positions(shape: Sequence[int], spec: PatchSpec) -> List[Position]:
    """Corner of every patch in row-major order"""
    if len(shape) != len(spec.extents):
        raise InvalidArgumentError(f"volume {tuple(shape)} and patches {spec.extents} differ in dimensionality")
    per_axis = [axis_positions(n, e, s) for n, e, s in zip(shape, spec.extents, spec.strides)]
    return [tuple(p) for p in itertools.product(*per_axis)]


def _window(position: Position, extents: Sequence[int]) -> Tuple[slice, ...]:
    return (Ellipsis,) + tuple(slice(p, p + e) for p, e in zip(position, extents))


def extract_patches(array: np.ndarray, spec: PatchSpec) -> List[Tuple[np.ndarray, Position]]:
    """
    Cut an array into the patch grid.

    Args:
        array: (..., *spatial) with ``len(spec.extents)`` spatial axes
        spec: Patch extents and strides

    Returns:
        (patch, position) pairs; patches keep the leading axes
    """
    array = np.asarray(array)
    dims = len(spec.extents)
    return [
        (array[_window(p, spec.extents)].copy(), p)
        for p in patch_positions(array.shape[-dims:], spec)
    ]


def volume_patches(volume: AnnotatedVolume, spec: PatchSpec) -> List[AnnotatedVolume]:
    """Patches of an image and its annotations cut at the same positions"""
    out = []
    for position in patch_positions(volume.image.shape, spec):
        window = _window(position, spec.extents)
        tag = "_".join(str(p) for p in position)
        out.append(AnnotatedVolume(f"{volume.id}_p{tag}", volume.image[window], volume.annotations[window]))
    return out


def coverage_count(shape: Sequence[int], patches: Sequence[Tuple[np.ndarray, Position]]) -> np.ndarray:
    count = np.zeros(shape, dtype=np.int64)
    dims = len(shape)
    for patch, position in patches:
        count[_window(position, patch.shape[-dims:])] += 1
    return count


def stitch_overlap_average(patches: Sequence[Tuple[np.ndarray, Position]], extents: Sequence[int]) -> np.ndarray:
    """
    Reassemble patches, averaging wherever they overlap.

    Args:
        patches: (patch, position) pairs, patches shaped (..., *patch extents)
        extents: Spatial extents of the output

    Returns:
        (..., *extents) float64 array
    """
    if not patches:
        raise InvalidArgumentError("no patches to stitch")
    extents = tuple(int(e) for e in extents)
    dims = len(extents)
    leading = np.shape(patches[0][0])[:-dims]
    total = np.zeros(leading + extents, dtype=np.float64)
    for patch, position in patches:
        patch = np.asarray(patch, dtype=np.float64)
        if patch.shape[:-dims] != leading:
            raise InvalidArgumentError(f"patch leading axes {patch.shape[:-dims]} differ from {leading}")
        window = _window(position, patch.shape[-dims:])
        if any(p < 0 or p + e > n for p, e, n in zip(position, patch.shape[-dims:], extents)):
            raise InvalidArgumentError(f"patch at {position} extends outside {extents}")
        total[window] += patch
    count = coverage_count(extents, patches)
    uncovered = np.argwhere(count == 0)
    if len(uncovered):
        raise CoverageError(tuple(uncovered[0]))
    logger.debug(f"stitched {len(patches)} patches into {extents} (max overlap {count.max()})")
    return total / count
