"""
SphereGaze - gaze prediction on equirectangular 360-degree scenes.

A spherical vision transformer encodes the scene, an LSTM with temporal
attention encodes the recent gaze history, and an adaptive fusion network
predicts the next gaze point together with a confidence score.
"""

__version__ = "0.1.0"
__author__ = "reshdesu"

from .config import DESK, LARGE, RunConfig, load_config
from .core import GazePipeline
from .errors import SphereGazeError
from .model import BaselineKind, GazeModel, build_model, model_forward

__all__ = [
    "DESK",
    "LARGE",
    "BaselineKind",
    "GazeModel",
    "GazePipeline",
    "RunConfig",
    "SphereGazeError",
    "build_model",
    "load_config",
    "model_forward",
]
