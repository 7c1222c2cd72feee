"""Numpy LSTM mask estimator: forward, BPTT, Adam, checkpoints, training."""

from gsep.neuralnet.adam import AdamState, adam_step
from gsep.neuralnet.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from gsep.neuralnet.network import (
    ForwardResult,
    LstmState,
    backward,
    forward,
    loss_and_grads,
    lstm_cell_forward,
    mse_grad,
    mse_loss,
    sigmoid,
)
from gsep.neuralnet.params import (
    ArchConfig,
    DenseLayerParams,
    LstmLayerParams,
    NetworkParams,
    init_params,
)
from gsep.neuralnet.train import EpochRecord, TrainConfig, TrainResult, TrainSequence, train

__all__ = [
    "AdamState",
    "ArchConfig",
    "DenseLayerParams",
    "EpochRecord",
    "ForwardResult",
    "LstmLayerParams",
    "LstmState",
    "NetworkParams",
    "TrainConfig",
    "TrainResult",
    "TrainSequence",
    "adam_step",
    "backward",
    "forward",
    "init_params",
    "load_checkpoint",
    "loss_and_grads",
    "lstm_cell_forward",
    "mse_grad",
    "mse_loss",
    "read_checkpoint",
    "save_checkpoint",
    "sigmoid",
    "train",
]
