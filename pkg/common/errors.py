"""
Error hierarchy shared by every package.

Argument problems also derive from ``ValueError``, state problems from
``RuntimeError`` and numeric failures from ``ArithmeticError`` so that callers
catching the builtin types keep working.
"""

from typing import Optional, Sequence, Tuple


class PulaskiError(Exception):
    """Root of all errors raised by this code base"""


class InvalidArgumentError(PulaskiError, ValueError):
    """An argument is outside its documented domain"""


class ShapeError(InvalidArgumentError):
    """Operand shapes do not conform to a primitive's signature"""

    def __init__(self, primitive: str, extents: Sequence[Tuple[int, ...]], detail: str = ""):
        self.primitive = primitive
        self.extents = [tuple(e) for e in extents]
        message = f"{primitive}: incompatible extents {self.extents}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class InsufficientSamplesError(InvalidArgumentError):
    """Too few samples for the requested statistic"""


class InsufficientAnnotationsError(InvalidArgumentError):
    """An image carries fewer annotations than the loss requires"""


class DegenerateHistogramError(InvalidArgumentError):
    """A histogram has a single populated value"""


class UndefinedTestError(PulaskiError):
    """A statistical test is undefined for the given data"""


class CoverageError(PulaskiError):
    """A voxel is not covered by any patch"""

    def __init__(self, voxel: Tuple[int, ...]):
        self.voxel = tuple(int(v) for v in voxel)
        super().__init__(f"voxel {self.voxel} is not covered by any patch")


class InvalidStateError(PulaskiError, RuntimeError):
    """An object is not in the state an operation requires"""


class NumericError(PulaskiError, ArithmeticError):
    """A computation produced or would produce an unusable number"""


class NumericOverflowError(NumericError):
    """A primitive produced a non-finite value"""


class ConvergenceError(NumericError):
    """An iterative solver stopped before reaching its tolerance"""

    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(f"{message} (residual={self.residual:.3e}, iterations={self.iterations})")


class TrainingDivergedError(NumericError):
    """The training loss became non-finite"""

    def __init__(self, epoch: int, batch: int, loss_kind: str, value: Optional[float] = None):
        self.epoch = epoch
        self.batch = batch
        self.loss_kind = loss_kind
        self.value = value
        super().__init__(
            f"non-finite {loss_kind} loss at epoch {epoch}, batch {batch}: {value}"
        )


class ConfigError(InvalidArgumentError):
    """A run configuration failed validation"""


class CheckpointError(PulaskiError):
    """A checkpoint is unreadable or does not match the configuration"""


class VolumeFormatError(PulaskiError):
    """A volume file is malformed"""
