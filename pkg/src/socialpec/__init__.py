"""Pedestrian trajectory prediction with pattern extraction convolution."""

from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import SceneWindow, build_windows, load_annotations, split_leave_one_out
from .errors import (CheckpointError, ConfigError, ContractError, DataError, DimensionError,
                     InvalidLengthError, ParseError, SocialPecError, TrainingDivergedError)
from .evaluation import LinearBaseline, ModelPredictor, displacement_metrics, evaluate
from .geometry import Frame, convert, convert_back, heading_of, linear_extrapolate
from .model import LocationPredictor, ModelConfig, gaussian_head, loc_predict, nll, pec
from .predictor import RolloutConfig, rollout
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "ConfigError", "ContractError", "DataError", "DimensionError", "Frame",
    "InvalidLengthError", "LinearBaseline", "LocationPredictor", "ModelConfig",
    "ModelPredictor", "ParseError", "RolloutConfig", "SceneWindow", "SocialPecError",
    "TrainConfig", "TrainingDivergedError", "build_windows", "convert", "convert_back",
    "displacement_metrics", "evaluate", "gaussian_head", "heading_of", "linear_extrapolate",
    "load_annotations", "load_checkpoint", "loc_predict", "nll", "pec", "rollout",
    "save_checkpoint", "split_leave_one_out", "train",
]
