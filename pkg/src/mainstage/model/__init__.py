"""Classifier: autodiff engine, network definition, training loop."""

from .autodiff import Tensor, backward
from .network import (ForwardResult, ModelConfig, ModelParams, encode_patch,
                      forward, init_params, loss, positional_encoding)
from .training import (Adam, EpochLog, FeatureStore, TrainConfig,
                       load_checkpoint, predict, save_checkpoint, train,
                       zero_grads)

__all__ = [
    "Tensor", "backward",
    "ForwardResult", "ModelConfig", "ModelParams", "encode_patch", "forward",
    "init_params", "loss", "positional_encoding",
    "Adam", "EpochLog", "FeatureStore", "TrainConfig", "load_checkpoint",
    "predict", "save_checkpoint", "train", "zero_grads",
]
