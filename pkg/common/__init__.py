"""Shared plumbing: error hierarchy and logging setup."""
from .errors import (
    PulaskiError,
    InvalidArgumentError,
    ShapeError,
    InsufficientSamplesError,
    InsufficientAnnotationsError,
    DegenerateHistogramError,
    UndefinedTestError,
    CoverageError,
    InvalidStateError,
    NumericError,
    NumericOverflowError,
    ConvergenceError,
    TrainingDivergedError,
    ConfigError,
    CheckpointError,
    VolumeFormatError,
)
from .logging_setup import configure_logging

__all__ = [
    "PulaskiError",
    "InvalidArgumentError",
    "ShapeError",
    "InsufficientSamplesError",
    "InsufficientAnnotationsError",
    "DegenerateHistogramError",
    "UndefinedTestError",
    "CoverageError",
    "InvalidStateError",
    "NumericError",
    "NumericOverflowError",
    "ConvergenceError",
    "TrainingDivergedError",
    "ConfigError",
    "CheckpointError",
    "VolumeFormatError",
    "configure_logging",
]
