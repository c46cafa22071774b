"""The saliency CNN: network, training, augmentation and model files."""

from .augment import augment
from .network import (
    INPUT_SHAPE,
    PARAM_SHAPES,
    SHAPE_CHAIN,
    Network,
    backward,
    forward,
    forward_batch,
    init_weights,
    loss,
    predict_proba,
)
from .serialize import load_model, save_model
from .train import TrainConfig, learning_rate, sgd_step, train, train_patches

__all__ = [
    "INPUT_SHAPE",
    "PARAM_SHAPES",
    "SHAPE_CHAIN",
    "Network",
    "TrainConfig",
    "augment",
    "backward",
    "forward",
    "forward_batch",
    "init_weights",
    "learning_rate",
    "load_model",
    "loss",
    "predict_proba",
    "save_model",
    "sgd_step",
    "train",
    "train_patches",
]
