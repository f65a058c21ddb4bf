"""Infrared small target detection with a spatial-channel cross
transformer network: model, training, inference, and the standard IRSTD
evaluation protocol (IoU / nIoU / F-measure / Pd / Fa / ROC-AUC)."""

from . import backend
from .config import DataConfig, ModelConfig, RunConfig, TrainConfig

__version__ = "0.1.0"

__all__ = ["backend", "DataConfig", "ModelConfig", "RunConfig", "TrainConfig",
           "__version__"]
