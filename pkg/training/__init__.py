"""Adam training with best-validation selection and resumable checkpoints."""
from .trainer import (
    OptimizerConfig,
    TrainConfig,
    TrainingData,
    TrainingHistory,
    TrainResult,
    train,
    run_epoch,
    evaluate_loss,
)

__all__ = [
    "OptimizerConfig",
    "TrainConfig",
    "TrainingData",
    "TrainingHistory",
    "TrainResult",
    "train",
    "run_epoch",
    "evaluate_loss",
]
