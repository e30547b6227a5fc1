"""Desk-scale style transfer: invertible content extractor, lite-transformer style
extractor, cross-attention stylizer with content-aware positions, on a small numpy autograd."""

from .losses import LossWeights, PerceptualNet
from .model import ModelConfig, PuffNetModel, stylize
from .trainer import Trainer, TrainConfig

__all__ = ["LossWeights", "ModelConfig", "PerceptualNet", "PuffNetModel", "Trainer", "TrainConfig", "stylize"]
__version__ = "0.1.0"
