"""
Parameter checkpoints.

Layout: the magic bytes ``PLSK1``, a little-endian u32 manifest length, the
UTF-8 JSON manifest ``{"tensors": [[name, shape, "<f8"], ...], "meta": {...}}``
and then every tensor's float64 little-endian payload in manifest order.
Files are written to a temporary sibling and renamed into place.
"""

import json
import logging
import os
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from common.errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"PLSK1"
DTYPE = "<f8"


def save_checkpoint(path: Union[str, Path], tensors: Dict[str, np.ndarray], meta: Dict[str, Any]) -> Path:
    """
    Write named arrays plus JSON metadata atomically.

    Args:
        path: Destination file
        tensors: Ordered name → array mapping
        meta: JSON-serialisable metadata (configuration, epoch, ...)

    Returns:
        The written path
    """
    path = Path(path)
    entries = []
    payloads = []
    for name, array in tensors.items():
        array = np.ascontiguousarray(np.asarray(array, dtype=DTYPE))
        entries.append([name, list(array.shape), DTYPE])
        payloads.append(array.tobytes())
    manifest = json.dumps({"tensors": entries, "meta": meta}, sort_keys=True).encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(manifest)))
        f.write(manifest)
        for payload in payloads:
            f.write(payload)
    os.replace(tmp, path)
    logger.info(f"checkpoint written to {path} ({len(entries)} tensors)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple["OrderedDict[str, np.ndarray]", Dict[str, Any]]:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Returns:
        (ordered name → array mapping, metadata)
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    offset = len(MAGIC)
    if len(blob) < offset + 4:
        raise CheckpointError(f"{path} is truncated")
    (length,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    try:
        manifest = json.loads(blob[offset:offset + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path} has a corrupt manifest: {e}") from e
    offset += length

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, shape, dtype in manifest.get("tensors", []):
        if dtype != DTYPE:
            raise CheckpointError(f"tensor '{name}' has unsupported dtype {dtype}")
        count = int(np.prod(shape)) if shape else 1
        size = count * 8
        if offset + size > len(blob):
            raise CheckpointError(f"{path} is truncated inside tensor '{name}'")
        tensors[name] = np.frombuffer(blob, dtype=DTYPE, count=count, offset=offset).reshape(shape).astype(np.float64)
        offset += size
    if offset != len(blob):
        raise CheckpointError(f"{path} has {len(blob) - offset} trailing bytes")
    return tensors, manifest.get("meta", {})
