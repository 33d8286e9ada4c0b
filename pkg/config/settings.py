"""
Run configuration.

A TOML file with one table per concern is read into nested dataclasses.
Every key must name a field; values are type-checked against the field's
default and then validated by the dataclass itself, so a bad configuration
fails before any command touches the disk. ``run.seed`` is the only seed: it
drives data generation, training and sampling alike.
"""

import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from common.errors import ConfigError, InvalidArgumentError
from datagen.patching import PatchSpec
from datagen.synthetic import SyntheticSpec
from evaluation.metrics import CROSS_PAIRS, WITHIN_PAIRS
from models.config import LatentSpec, LossSpec, ModelKind, UNetConfig
from training.trainer import OptimizerConfig, TrainConfig
from transport.sinkhorn import SinkhornConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = Path(__file__).with_name("default.toml")


@dataclass
class RunSettings:
    """Model family, dimensionality, seed and output location of a run"""
    model: str = "pulaski-hausdorff"
    dims: int = 2
    seed: int = 7
    out_dir: str = "runs"
    data_dir: str = ""

    def __post_init__(self):
        try:
            ModelKind(self.model)
        except ValueError:
            raise InvalidArgumentError(
                f"unknown model '{self.model}', expected one of {[k.value for k in ModelKind]}"
            ) from None
        if self.dims not in (2, 3):
            raise InvalidArgumentError(f"dims must be 2 or 3, got {self.dims}")
        if not self.out_dir:
            raise InvalidArgumentError("out_dir must not be empty")

    @property
    def kind(self) -> ModelKind:
        return ModelKind(self.model)


@dataclass
class SampleConfig:
    """
    Sampling settings.

    3D models predict patch by patch; the per-patch maps are stitched by
    overlap averaging.
    """
    m: int = 10
    bins: int = 256
    checkpoint: str = "best.plsk"
    split: str = "test"
    patch_extents: Tuple[int, ...] = (16, 16, 16)
    patch_strides: Tuple[int, ...] = (8, 8, 8)

    def __post_init__(self):
        self.patch_extents = tuple(self.patch_extents)
        self.patch_strides = tuple(self.patch_strides)
        if self.m < 1:
            raise InvalidArgumentError(f"m must be at least 1, got {self.m}")
        if self.bins < 2:
            raise InvalidArgumentError(f"bins must be at least 2, got {self.bins}")
        if self.split not in ("train", "val", "test"):
            raise InvalidArgumentError(f"unknown split '{self.split}'")
        PatchSpec(self.patch_extents, self.patch_strides)

    @property
    def patch_spec(self) -> PatchSpec:
        return PatchSpec(self.patch_extents, self.patch_strides)


@dataclass
class EvalConfig:
    """
    Evaluation settings.

    ``methods`` lists model names whose predictions under the run directory
    are evaluated; ``prediction_dirs`` adds explicit directories. With both
    empty the run's own model is evaluated.
    """
    methods: List[str] = field(default_factory=list)
    prediction_dirs: List[str] = field(default_factory=list)
    cross_pairs: str = "all"
    within_pairs: str = "distinct"
    split: str = "test"
    write_roo: bool = True

    def __post_init__(self):
        self.methods = list(self.methods)
        self.prediction_dirs = list(self.prediction_dirs)
        for name in self.methods:
            try:
                ModelKind(name)
            except ValueError:
                raise InvalidArgumentError(f"unknown method '{name}'") from None
        if self.cross_pairs not in CROSS_PAIRS or self.within_pairs not in WITHIN_PAIRS:
            raise InvalidArgumentError(f"unsupported GED pairing ({self.cross_pairs}, {self.within_pairs})")
        if self.split not in ("train", "val", "test"):
            raise InvalidArgumentError(f"unknown split '{self.split}'")


# section name → (dataclass, keys that other sections or the run table own)
SECTIONS: Dict[str, Tuple[type, Tuple[str, ...]]] = {
    "run": (RunSettings, ()),
    "data": (SyntheticSpec, ("seed",)),
    "unet": (UNetConfig, ("spatial_dims",)),
    "latent": (LatentSpec, ()),
    "loss": (LossSpec, ("kind",)),
    "sinkhorn": (SinkhornConfig, ()),
    "train": (TrainConfig, ("seed",)),
    "optimizer": (OptimizerConfig, ()),
    "sample": (SampleConfig, ()),
    "eval": (EvalConfig, ()),
}


@dataclass
class RunConfig:
    """Fully validated configuration of every command"""
    run: RunSettings = field(default_factory=RunSettings)
    data: SyntheticSpec = field(default_factory=SyntheticSpec)
    unet: UNetConfig = field(default_factory=UNetConfig)
    latent: LatentSpec = field(default_factory=LatentSpec)
    loss: LossSpec = field(default_factory=LossSpec)
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        self.data = replace(self.data, seed=self.run.seed)
        self.train = replace(self.train, seed=self.run.seed)
        self.unet = replace(self.unet, spatial_dims=self.run.dims)
        self.loss = replace(self.loss, kind=self.run.kind.default_loss)
        if self.run.dims == 3 and self.data.spatial_dims != 3:
            raise ConfigError("3D models need 3D data extents")
        if self.run.dims == 3 and len(self.sample.patch_extents) != 3:
            raise ConfigError("3D sampling needs 3D patch extents")
        self._check_divisible()

    def _check_divisible(self) -> None:
        multiple = self.unet.required_multiple
        if self.run.dims == 2:
            extents = self.data.extents[-2:]
        else:
            extents = self.sample.patch_extents
        if any(e % multiple for e in extents):
            raise ConfigError(f"extents {extents} must be multiples of {multiple} for a depth-{self.unet.depth} U-Net")

    @property
    def out_dir(self) -> Path:
        return Path(self.run.out_dir)

    @property
    def data_dir(self) -> Path:
        return Path(self.run.data_dir) if self.run.data_dir else self.out_dir / "data"

    def train_dir(self, model: Optional[str] = None) -> Path:
        return self.out_dir / "train" / (model or self.run.model)

    def predictions_dir(self, model: Optional[str] = None) -> Path:
        return self.out_dir / "predictions" / (model or self.run.model)

    @property
    def eval_dir(self) -> Path:
        return self.out_dir / "eval"

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready copy with enums as their values"""
        return _plain(asdict(self))


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _check_type(section: str, name: str, value: Any, default: Any) -> Any:
    where = f"{section}.{name}"
    if default is None:
        if value is not None and not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return value
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, (tuple, list)):
        ok = isinstance(value, (tuple, list))
    elif isinstance(default, Enum):
        ok = isinstance(value, str)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{where} expects {type(default).__name__}, got {value!r}")
    return value


def _defaults(cls: type) -> Dict[str, Any]:
    instance = cls()
    return {f.name: getattr(instance, f.name) for f in fields(cls)}


def build_section(section: str, values: Dict[str, Any]) -> Any:
    """
    One section's dataclass from its TOML table.

    Raises:
        ConfigError: for unknown keys, wrong types or failed validation
    """
    cls, reserved = SECTIONS[section]
    if not isinstance(values, dict):
        raise ConfigError(f"[{section}] must be a table")
    defaults = _defaults(cls)
    known = set(defaults) - set(reserved)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(unknown)}")
    checked = {k: _check_type(section, k, v, defaults[k]) for k, v in values.items()}
    try:
        return cls(**checked)
    except (InvalidArgumentError, TypeError, ValueError) as e:
        raise ConfigError(f"[{section}] {e}") from e


def build_config(raw: Dict[str, Any]) -> RunConfig:
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(unknown)}")
    sections = {name: build_section(name, raw.get(name, {})) for name in SECTIONS}
    try:
        return RunConfig(**sections)
    except InvalidArgumentError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e


def parse_override(item: str) -> Tuple[str, str, Any]:
    """
    ``section.key=value`` with the value read as a TOML literal.

    Bare words that are not valid TOML are taken as strings.
    """
    target, sep, text = item.partition("=")
    section, dot, key = target.strip().partition(".")
    if not sep or not dot or not section or not key:
        raise ConfigError(f"override '{item}' is not of the form section.key=value")
    try:
        value = tomllib.loads(f"value = {text.strip()}")["value"]
    except tomllib.TOMLDecodeError:
        value = text.strip()
    return section, key, value


def read_toml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path} is not valid TOML: {e}") from e


def load_config(
    path: Optional[Path] = None,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    out_dir: Optional[str] = None,
) -> RunConfig:
    """
    Resolve a RunConfig from file, environment and command-line overrides.

    Precedence, lowest first: dataclass defaults, the TOML file (``path``,
    else ``PULASKI_CONFIG``, else the bundled default.toml), ``PULASKI_OUT``
    and ``PULASKI_SEED``, ``--set`` overrides, then ``seed``/``out_dir``.

    Args:
        path: TOML file to read
        overrides: ``section.key=value`` strings
        seed: Replaces run.seed
        out_dir: Replaces run.out_dir

    Returns:
        Validated RunConfig
    """
    load_dotenv()
    path = Path(path or os.getenv("PULASKI_CONFIG") or DEFAULT_CONFIG)
    raw = read_toml(path)

    run = raw.setdefault("run", {})
    if os.getenv("PULASKI_OUT"):
        run["out_dir"] = os.getenv("PULASKI_OUT")
    if os.getenv("PULASKI_SEED"):
        try:
            run["seed"] = int(os.getenv("PULASKI_SEED"))
        except ValueError:
            raise ConfigError(f"PULASKI_SEED must be an integer, got '{os.getenv('PULASKI_SEED')}'") from None
    for item in overrides:
        section, key, value = parse_override(item)
        raw.setdefault(section, {})[key] = value
    if seed is not None:
        run["seed"] = seed
    if out_dir is not None:
        run["out_dir"] = str(out_dir)

    cfg = build_config(raw)
    logger.debug(f"configuration resolved from {path}")
    return cfg
