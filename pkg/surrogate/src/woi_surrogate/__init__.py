"""Neural surrogate that smooths Monte Carlo interface-problem solutions."""

from .evaluate import aligned_l2, evaluate, highfreq_energy, predict
from .model import SolutionMLP, load_model, save_model
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "aligned_l2",
    "evaluate",
    "highfreq_energy",
    "predict",
    "SolutionMLP",
    "load_model",
    "save_model",
    "TrainConfig",
    "train",
]
