"""Multi-frequency graph convolutional fusion of audio, video and gaze features."""

from .autodiff import ShapeError, Tape, Tensor
from .metrics import MetricsReport, evaluate
from .model import MffbmConfig, MffbmModel
from .spectral import ModalityGraph, eigendecompose, frequency_response, mffbm_kernels
from .training import TrainConfig, kfold_split, train

__version__ = "0.1.0"

__all__ = [
    "ShapeError", "Tape", "Tensor",
    "MetricsReport", "evaluate",
    "MffbmConfig", "MffbmModel",
    "ModalityGraph", "eigendecompose", "frequency_response", "mffbm_kernels",
    "TrainConfig", "kfold_split", "train",
]
