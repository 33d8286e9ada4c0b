"""
Training loop shared by every model family.

Each epoch draws its own generator from (seed, epoch) and validation uses
(seed, epoch, 1), so a run resumed from its ``last`` checkpoint replays the
next epoch exactly. The parameters with the lowest validation loss are kept
and handed back at the end.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from common.errors import CheckpointError, InvalidArgumentError, TrainingDivergedError
from engine.optim import AdamState, adam_step
from engine.tensor import Tensor, backward, no_grad
from models.base_model import SegmentationModel
from models.checkpoint import load_checkpoint

logger = logging.getLogger(__name__)

DEFAULT_BATCH = {2: 8, 3: 4}
LAST_CHECKPOINT = "last.plsk"
BEST_CHECKPOINT = "best.plsk"
HISTORY_FILE = "history.csv"


@dataclass
class OptimizerConfig:
    """Adam hyper-parameters"""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def new_state(self, model: SegmentationModel) -> AdamState:
        return AdamState.for_params(model.params.tensors(), **asdict(self))


@dataclass
class TrainConfig:
    """
    Epoch schedule.

    ``samples_per_epoch`` caps the slices or patches drawn (without
    replacement) from the training set every epoch; ``val_samples`` does the
    same for validation.
    """
    epochs: int = 500
    batch_size: Optional[int] = None
    samples_per_epoch: int = 256
    val_samples: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidArgumentError(f"epochs must be nonnegative, got {self.epochs}")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be positive, got {self.batch_size}")
        if self.samples_per_epoch < 1 or self.val_samples < 1:
            raise InvalidArgumentError("sample caps must be positive")

    def resolved_batch_size(self, spatial_dims: int) -> int:
        return self.batch_size or DEFAULT_BATCH[spatial_dims]


@dataclass
class TrainingData:
    """(N, C, *spatial) images with (N, R, *spatial) binary annotations"""
    images: np.ndarray
    annotations: np.ndarray

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.annotations = np.asarray(self.annotations, dtype=np.float64)
        if self.images.shape[0] == 0:
            raise InvalidArgumentError("dataset is empty")
        if self.annotations.shape[0] != self.images.shape[0] or self.annotations.shape[2:] != self.images.shape[2:]:
            raise InvalidArgumentError(
                f"annotations {self.annotations.shape} do not match images {self.images.shape}"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    def batch(self, indices: np.ndarray):
        return Tensor(self.images[indices]), self.annotations[indices]


@dataclass
class TrainingHistory:
    """Per-epoch losses; serialised as ``epoch,train_loss,val_loss,seconds``"""
    records: List[Dict[str, float]] = field(default_factory=list)

    def append(self, epoch: int, train_loss: float, val_loss: float, seconds: float) -> None:
        self.records.append({
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "seconds": seconds,
        })

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.records, columns=["epoch", "train_loss", "val_loss", "seconds"])

    def to_csv(self, path: Path) -> Path:
        self.to_frame().to_csv(path, index=False)
        return path

    @property
    def best_epoch(self) -> Optional[int]:
        if not self.records:
            return None
        return int(min(self.records, key=lambda r: r["val_loss"])["epoch"])


@dataclass
class TrainResult:
    model: SegmentationModel
    history: TrainingHistory
    best_epoch: Optional[int]
    best_val_loss: float


def _epoch_indices(n: int, cap: int, rng: np.random.Generator) -> np.ndarray:
    if n <= cap:
        return rng.permutation(n)
    return rng.choice(n, size=cap, replace=False)


def _batches(indices: np.ndarray, size: int):
    for start in range(0, len(indices), size):
        yield indices[start:start + size]


def _check_finite(value: float, epoch: int, batch: int, model: SegmentationModel) -> None:
    if not np.isfinite(value):
        logger.error(f"{model.kind.value}: loss {value} at epoch {epoch}, batch {batch}")
        raise TrainingDivergedError(epoch, batch, model.loss_spec.kind.value, value)


def run_epoch(
    model: SegmentationModel,
    data: TrainingData,
    cfg: TrainConfig,
    state: AdamState,
    epoch: int,
) -> float:
    """One pass of Adam updates; returns the mean batch loss"""
    rng = np.random.default_rng([cfg.seed, epoch])
    indices = _epoch_indices(len(data), cfg.samples_per_epoch, rng)
    params = model.params.tensors()
    losses = []
    for b, batch in enumerate(_batches(indices, cfg.resolved_batch_size(model.unet_cfg.spatial_dims))):
        images, annotations = data.batch(batch)
        model.params.zero_grad()
        loss = model.loss(images, annotations, rng)
        _check_finite(loss.item(), epoch, b, model)
        backward(loss, leaves=params)
        adam_step(params, state)
        losses.append(loss.item())
    return float(np.mean(losses))


def evaluate_loss(model: SegmentationModel, data: TrainingData, cfg: TrainConfig, epoch: int) -> float:
    """Mean validation loss without recording gradients"""
    rng = np.random.default_rng([cfg.seed, epoch, 1])
    indices = _epoch_indices(len(data), cfg.val_samples, rng)
    losses = []
    with no_grad():
        for b, batch in enumerate(_batches(indices, cfg.resolved_batch_size(model.unet_cfg.spatial_dims))):
            images, annotations = data.batch(batch)
            value = model.loss(images, annotations, rng).item()
            _check_finite(value, epoch, b, model)
            losses.append(value)
    return float(np.mean(losses))


def _save_last(model: SegmentationModel, state: AdamState, out_dir: Path, epoch: int,
               history: TrainingHistory, best_val: float) -> None:
    meta: Dict[str, Any] = {
        "epoch": epoch,
        "adam": {"lr": state.lr, "beta1": state.beta1, "beta2": state.beta2, "eps": state.eps, "step": state.step},
        "history": history.records,
        "best_val_loss": best_val if np.isfinite(best_val) else None,
    }
    model.save(out_dir / LAST_CHECKPOINT, extra_tensors=state.moments(), extra_meta=meta)


def _restore(model: SegmentationModel, out_dir: Path):
    tensors, meta = load_checkpoint(out_dir / LAST_CHECKPOINT)
    if meta.get("model") != model.kind.value:
        raise CheckpointError(f"cannot resume a {meta.get('model')} run as {model.kind.value}")
    model.load_params(tensors)
    n = len(model.params)
    adam = meta["adam"]
    state = AdamState(lr=adam["lr"], beta1=adam["beta1"], beta2=adam["beta2"], eps=adam["eps"], step=adam["step"])
    try:
        state.m = [np.array(tensors[f"adam.m.{i}"]) for i in range(n)]
        state.v = [np.array(tensors[f"adam.v.{i}"]) for i in range(n)]
    except KeyError as e:
        raise CheckpointError(f"last checkpoint lacks optimizer moment {e}") from e
    history = TrainingHistory(list(meta.get("history", [])))
    best_val = meta.get("best_val_loss")
    best = None
    if (out_dir / BEST_CHECKPOINT).exists():
        best_tensors, _ = load_checkpoint(out_dir / BEST_CHECKPOINT)
        best = {k: v for k, v in best_tensors.items() if not k.startswith("adam.")}
    return state, history, int(meta["epoch"]), (np.inf if best_val is None else float(best_val)), best


def train(
    model: SegmentationModel,
    train_data: TrainingData,
    val_data: TrainingData,
    cfg: TrainConfig,
    optimizer: Optional[OptimizerConfig] = None,
    out_dir: Optional[Path] = None,
    resume: bool = False,
) -> TrainResult:
    """
    Optimise ``model`` with Adam and keep the best-validation parameters.

    Args:
        model: Freshly built (or restored) model; updated in place
        train_data: Training images and annotations
        val_data: Validation images and annotations
        cfg: Epoch schedule
        optimizer: Adam hyper-parameters
        out_dir: Where ``best``/``last`` checkpoints and the history CSV go
        resume: Continue from ``out_dir/last.plsk``

    Returns:
        TrainResult whose model carries the best-validation parameters
    """
    optimizer = optimizer or OptimizerConfig()
    out_dir = Path(out_dir) if out_dir is not None else None
    if resume and out_dir is None:
        raise InvalidArgumentError("resuming needs an output directory")

    state = optimizer.new_state(model)
    history = TrainingHistory()
    best_arrays = model.params.to_arrays()
    best_val = np.inf
    start = 1
    if resume:
        state, history, last_epoch, best_val, restored_best = _restore(model, out_dir)
        best_arrays = restored_best or model.params.to_arrays()
        start = last_epoch + 1
        logger.info(f"resuming {model.kind.value} at epoch {start}")
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        if not resume or not (out_dir / BEST_CHECKPOINT).exists():
            model.save(out_dir / BEST_CHECKPOINT, extra_meta={"epoch": 0})

    for epoch in range(start, cfg.epochs + 1):
        started = time.perf_counter()
        train_loss = run_epoch(model, train_data, cfg, state, epoch)
        val_loss = evaluate_loss(model, val_data, cfg, epoch)
        seconds = time.perf_counter() - started
        history.append(epoch, train_loss, val_loss, seconds)
        improved = val_loss < best_val
        if improved:
            best_val = val_loss
            best_arrays = model.params.to_arrays()
        logger.info(
            f"epoch {epoch}/{cfg.epochs}: train {train_loss:.6f}, val {val_loss:.6f}"
            f"{' (best)' if improved else ''} [{seconds:.1f}s]"
        )
        if out_dir is not None:
            if improved:
                model.save(out_dir / BEST_CHECKPOINT, extra_meta={"epoch": epoch, "val_loss": val_loss})
            _save_last(model, state, out_dir, epoch, history, best_val)

    model.params.load_arrays(best_arrays)
    if out_dir is not None:
        history.to_csv(out_dir / HISTORY_FILE)
    return TrainResult(model, history, history.best_epoch, float(best_val))
