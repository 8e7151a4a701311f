"""Small deterministic numpy neural-network kernel.

Tensors are plain ``numpy.ndarray`` objects; float64 for verification,
float32 allowed for training.
"""
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, numerical_grad, rel_error
from .layers import (avgpool2, avgpool2_grad, conv2d, conv2d_grad, dense, dense_grad,
                     relu, relu_grad)
from .lstm import LstmCellParams, lstm_cell, lstm_cell_grad, lstm_sequence, lstm_sequence_grad
from .optim import AdamState, TrainConfig, adam_step, lr_schedule, softmax, softmax_xent

__all__ = [
    "AdamState", "LstmCellParams", "TrainConfig", "adam_step", "avgpool2", "avgpool2_grad",
    "conv2d", "conv2d_grad", "dense", "dense_grad", "grad_check", "load_checkpoint",
    "lr_schedule", "lstm_cell", "lstm_cell_grad", "lstm_sequence", "lstm_sequence_grad",
    "numerical_grad", "rel_error", "relu", "relu_grad", "save_checkpoint", "softmax",
    "softmax_xent",
]
