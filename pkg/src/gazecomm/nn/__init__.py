"""Minimal dense network kernel: tape autodiff, cells, losses, SGD."""

from .layers import Dense, GRUCell, LSTMCell, dense_forward, gru_cell, lstm_cell
from .optim import NonFiniteError, lr_schedule, sgd_step
from .params import CheckpointError, Parameter, ParameterStore, init_params
from .tape import Tape, TapeError, Var, backward, binary_cross_entropy, softmax, softmax_cross_entropy

__all__ = [
    "CheckpointError",
    "Dense",
    "GRUCell",
    "LSTMCell",
    "NonFiniteError",
    "Parameter",
    "ParameterStore",
    "Tape",
    "TapeError",
    "Var",
    "backward",
    "binary_cross_entropy",
    "dense_forward",
    "gru_cell",
    "init_params",
    "lr_schedule",
    "lstm_cell",
    "sgd_step",
    "softmax",
    "softmax_cross_entropy",
]
