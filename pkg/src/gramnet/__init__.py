"""gramnet: a small CPU library for texture-based fake-fingerprint detection.

Dense tensors with reverse-mode autodiff, gram-matrix texture modules stacked
on fire modules, the full training protocol (Adamax, plateau halving, flip
augmentation), biometric error metrics, and binary checkpoints, plus a CLI.
"""

from .config import TrainConfig
from .errors import (CheckpointFormatError, ContractError, DatasetLayoutError,
                     GramnetError, ImageDecodeError, IncompatibleCheckpointError,
                     InvalidShapeError)
from .tensor import Tape, Tensor, backward, matmul, tensor_new

__all__ = [
    "TrainConfig",
    "Tape",
    "Tensor",
    "backward",
    "matmul",
    "tensor_new",
    "GramnetError",
    "InvalidShapeError",
    "ContractError",
    "CheckpointFormatError",
    "IncompatibleCheckpointError",
    "DatasetLayoutError",
    "ImageDecodeError",
]

__version__ = "0.1.0"
