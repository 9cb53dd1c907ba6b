"""Numpy neural-network core: layers with explicit backprop, Adam, training."""
from .functional import cross_entropy, kl_divergence, t_softmax
from .optim import AdamState, adam_step
from .resnet import STUDENT_CONFIG, TEACHER_CONFIG, Resnet1d, Resnet1dConfig
from .serialize import load_model, save_model
from .training import TrainConfig, TrainHistory, train

__all__ = [
    "AdamState",
    "Resnet1d",
    "Resnet1dConfig",
    "STUDENT_CONFIG",
    "TEACHER_CONFIG",
    "TrainConfig",
    "TrainHistory",
    "adam_step",
    "cross_entropy",
    "kl_divergence",
    "load_model",
    "save_model",
    "t_softmax",
    "train",
]
