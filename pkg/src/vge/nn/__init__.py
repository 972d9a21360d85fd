"""From-scratch dropout-masked recurrent networks."""

from .layers import (
    DENSE,
    GRU,
    KINDS,
    LSTM,
    RECURRENT_KINDS,
    SIMPLE_RNN,
    LayerSpec,
    forward_dense,
    forward_gru,
    forward_lstm,
    forward_simple_rnn,
)
from .model import (
    RnnModel,
    draw_masks,
    forward_model,
    gradients,
    init_model,
    load_model,
    loss,
    model_from_dict,
    model_to_dict,
    ones_masks,
    save_model,
)
from .optim import AdamConfig, AdamState, adam_init, adam_step
from .train import TrainConfig, mse, predict, train

__all__ = [
    "DENSE", "GRU", "KINDS", "LSTM", "RECURRENT_KINDS", "SIMPLE_RNN",
    "LayerSpec", "RnnModel", "AdamConfig", "AdamState", "TrainConfig",
    "forward_dense", "forward_gru", "forward_lstm", "forward_simple_rnn",
    "forward_model", "draw_masks", "ones_masks", "gradients", "loss",
    "init_model", "train", "predict", "mse", "adam_init", "adam_step",
    "model_to_dict", "model_from_dict", "save_model", "load_model",
]
