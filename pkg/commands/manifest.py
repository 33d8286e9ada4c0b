"""
Run manifests.

Every command leaves ``<out_dir>/manifests/<command>.json`` behind: the
resolved configuration, content hashes of what it read and wrote, and its
results. Only ``started_at`` and ``wall_seconds`` change between reruns of the
same configuration.
"""

import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from config.settings import RunConfig

logger = logging.getLogger(__name__)

MANIFEST_DIR = "manifests"


def _files(paths: Iterable[Union[str, Path]]) -> List[Path]:
    out = []
    for path in paths:
        path = Path(path)
        if path.is_dir():
            out.extend(sorted(p for p in path.rglob("*") if p.is_file()))
        elif path.is_file():
            out.append(path)
    return out


def content_hash(paths: Iterable[Union[str, Path]]) -> str:
    """
    SHA-256 over the relative names and bytes of files and directory trees.

    Args:
        paths: Files or directories; directories are walked in sorted order

    Returns:
        Hex digest; empty input hashes the empty string
    """
    digest = hashlib.sha256()
    for root in paths:
        root = Path(root)
        for path in _files([root]):
            name = path.relative_to(root).as_posix() if root.is_dir() else path.name
            digest.update(name.encode("utf-8") + b"\0")
            digest.update(hashlib.sha256(path.read_bytes()).digest())
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    inputs_sha256: str = ""
    outputs_sha256: str = ""
    history: List[Dict[str, float]] = field(default_factory=list)
    metrics: Dict[str, Any] = field(default_factory=dict)
    started_at: str = ""
    wall_seconds: float = 0.0
    _clock: float = field(default=0.0, repr=False)

    @classmethod
    def start(cls, command: str, cfg: RunConfig, inputs: Iterable[Union[str, Path]] = ()) -> "RunManifest":
        manifest = cls(command, cfg.to_dict(), inputs_sha256=content_hash(inputs))
        manifest.started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        manifest._clock = time.perf_counter()
        return manifest

    def finish(self, cfg: RunConfig, outputs: Iterable[Union[str, Path]] = ()) -> Path:
        """Hash the outputs, stamp the wall-clock time and write the manifest atomically"""
        self.outputs_sha256 = content_hash(outputs)
        self.wall_seconds = time.perf_counter() - self._clock
        return self.write(cfg.out_dir / MANIFEST_DIR / f"{self.command}.json")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("_clock")
        return data

    def write(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True, default=float)
        os.replace(tmp, path)
        logger.info(f"{self.command} manifest written to {path} ({self.wall_seconds:.1f}s)")
        return path


def read_manifest(path: Union[str, Path]) -> Optional[Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        return None
    with open(path) as f:
        return json.load(f)
