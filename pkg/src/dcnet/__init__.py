"""Pan-sharpening with a dual-channel 2D/3D CNN and convolutional-LSTM fusion."""

__version__ = "0.1.0"

from . import engine
from .model import ClstmState, DCNet, ModelConfig, ParamStore, init_params
from .training import (TrainOutcome, load_checkpoint, save_checkpoint,
                       train_model)
from .estimator import DCNetSharpener

__all__ = ["engine", "ClstmState", "DCNet", "ModelConfig", "ParamStore",
           "init_params", "DCNetSharpener", "TrainOutcome", "load_checkpoint",
           "save_checkpoint", "train_model", "__version__"]
