"""Numpy graph-transformer regressor for expressibility."""
from .layers import GraphBatch, global_mean_pool, huber_grad, huber_loss, transformer_conv
from .model import ModelConfig, backward, forward, init_params, param_shapes, predict
from .train import (
    AdamState,
    Model,
    ReduceLROnPlateau,
    TrainConfig,
    TrainResult,
    adam_step,
    evaluate,
    load_checkpoint,
    rmse,
    save_checkpoint,
    train,
)

__all__ = [
    "AdamState", "GraphBatch", "Model", "ModelConfig", "ReduceLROnPlateau", "TrainConfig",
    "TrainResult", "adam_step", "backward", "evaluate", "forward", "global_mean_pool",
    "huber_grad", "huber_loss", "init_params", "load_checkpoint", "param_shapes", "predict",
    "rmse", "save_checkpoint", "train", "transformer_conv",
]
