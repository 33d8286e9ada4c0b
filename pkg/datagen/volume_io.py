"""
Volume files and dataset directories.

A volume file holds the magic bytes ``PVOL1``, a u8 dimensionality, one
little-endian u32 per extent, a u8 payload kind (0: float32 image, 1: uint8
mask) and the raw little-endian payload in C order.

A dataset directory holds ``images/<id>.pvol``, one
``annotations/<id>_r<k>.pvol`` per rater and ``dataset.json`` listing the
files, the split assignment and the generating settings.
"""

import json
import logging
import os
import struct
from dataclasses import asdict
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from common.errors import VolumeFormatError
from datagen.synthetic import AnnotatedVolume, SyntheticDataset, SyntheticSpec

logger = logging.getLogger(__name__)

MAGIC = b"PVOL1"
MANIFEST = "dataset.json"


class PayloadKind(IntEnum):
    IMAGE = 0
    MASK = 1

    @property
    def dtype(self) -> str:
        return "<f4" if self is PayloadKind.IMAGE else "u1"


def _atomic_write(path: Path, blob: bytes) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)
    return path


def write_volume(path: Union[str, Path], array: np.ndarray, kind: PayloadKind) -> Path:
    """
    Store one image or mask.

    Args:
        path: Destination file
        array: Array of 1 to 255 axes; masks must be binary
        kind: Payload encoding

    Returns:
        The written path
    """
    array = np.asarray(array)
    if not 0 < array.ndim < 256:
        raise VolumeFormatError(f"cannot store an array with {array.ndim} axes")
    if kind is PayloadKind.MASK and not np.all((array == 0) | (array == 1)):
        raise VolumeFormatError(f"mask for {path} is not binary")
    payload = np.ascontiguousarray(array.astype(kind.dtype)).tobytes()
    header = MAGIC + struct.pack("<B", array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape) \
        + struct.pack("<B", int(kind))
    return _atomic_write(Path(path), header + payload)


def read_volume(path: Union[str, Path]) -> Tuple[np.ndarray, PayloadKind]:
    """Array and payload kind of a file written by ``write_volume``"""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise VolumeFormatError(f"cannot read volume {path}: {e}") from e
    if not blob.startswith(MAGIC):
        raise VolumeFormatError(f"{path} is not a volume file (bad magic)")
    offset = len(MAGIC)
    try:
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        (code,) = struct.unpack_from("<B", blob, offset)
        offset += 1
    except struct.error as e:
        raise VolumeFormatError(f"{path} has a truncated header") from e
    try:
        kind = PayloadKind(code)
    except ValueError as e:
        raise VolumeFormatError(f"{path} has unknown payload kind {code}") from e
    itemsize = np.dtype(kind.dtype).itemsize
    expected = int(np.prod(shape)) * itemsize
    if len(blob) - offset != expected:
        raise VolumeFormatError(f"{path} holds {len(blob) - offset} payload bytes, expected {expected}")
    array = np.frombuffer(blob, dtype=kind.dtype, offset=offset).reshape(shape)
    return array.copy(), kind


def read_image(path: Union[str, Path]) -> np.ndarray:
    array, kind = read_volume(path)
    if kind is not PayloadKind.IMAGE:
        raise VolumeFormatError(f"{path} holds a mask, expected an image")
    return array


def read_mask(path: Union[str, Path]) -> np.ndarray:
    array, kind = read_volume(path)
    if kind is not PayloadKind.MASK:
        raise VolumeFormatError(f"{path} holds an image, expected a mask")
    return array


def save_dataset(dataset: SyntheticDataset, out_dir: Union[str, Path], spec: Optional[SyntheticSpec] = None) -> Path:
    """
    Write every volume and the JSON manifest.

    Returns:
        Path of the manifest
    """
    out_dir = Path(out_dir)
    entries = []
    for volume in dataset.volumes:
        image = Path("images") / f"{volume.id}.pvol"
        write_volume(out_dir / image, volume.image, PayloadKind.IMAGE)
        masks = []
        for k, annotation in enumerate(volume.annotations):
            mask = Path("annotations") / f"{volume.id}_r{k}.pvol"
            write_volume(out_dir / mask, annotation, PayloadKind.MASK)
            masks.append(mask.as_posix())
        entries.append({"id": volume.id, "image": image.as_posix(), "annotations": masks})
    manifest: Dict[str, Any] = {
        "format": MAGIC.decode("ascii"),
        "volumes": entries,
        "splits": dataset.splits,
        "spec": asdict(spec) if spec is not None else None,
    }
    path = _atomic_write(out_dir / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8"))
    logger.info(f"dataset of {len(entries)} volumes written to {out_dir}")
    return path


def load_manifest(data_dir: Union[str, Path]) -> Dict[str, Any]:
    path = Path(data_dir) / MANIFEST
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as e:
        raise VolumeFormatError(f"cannot read dataset manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise VolumeFormatError(f"{path} is not valid JSON: {e}") from e


def load_dataset(data_dir: Union[str, Path]) -> SyntheticDataset:
    """Volumes and splits of a dataset directory written by ``save_dataset``"""
    data_dir = Path(data_dir)
    manifest = load_manifest(data_dir)
    volumes = []
    try:
        for entry in manifest["volumes"]:
            image = read_image(data_dir / entry["image"])
            annotations = np.stack([read_mask(data_dir / m) for m in entry["annotations"]])
            volumes.append(AnnotatedVolume(entry["id"], image, annotations))
        splits = {name: [int(i) for i in idx] for name, idx in manifest["splits"].items()}
    except (KeyError, TypeError) as e:
        raise VolumeFormatError(f"{data_dir / MANIFEST} is missing an entry: {e}") from e
    logger.info(f"loaded {len(volumes)} volumes from {data_dir}")
    return SyntheticDataset(volumes, splits)
