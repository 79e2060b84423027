"""Adaptive hybrid spatial-temporal graph forecasting on a numpy autodiff core."""

from .data import TrafficDataset, generate_synthetic, make_windows
from .model import ModelConfig, ModelParams, forward, init_params

__all__ = ["ModelConfig", "ModelParams", "TrafficDataset", "forward", "generate_synthetic", "init_params", "make_windows"]
__version__ = "0.1.0"
