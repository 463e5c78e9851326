"""Kinematic-feature hierarchical attention refinement of video keypoint sequences."""

from .config import LossConfig, ModelConfig, TrainConfig
from .kinematics import PoseSequence
from .model import HanetModel

__all__ = ["HanetModel", "LossConfig", "ModelConfig", "PoseSequence", "TrainConfig"]
__version__ = "0.1.0"
