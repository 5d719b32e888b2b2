"""Affine layers and recurrent cells built on the tape ops.

Each layer owns parameter *names* inside a shared :class:`ParameterStore` and
binds them to the active tape on every call.
"""

from __future__ import annotations

import numpy as np

from . import tape as T
from .params import ParameterStore


def dense_forward(x, W, b, activation: str = "none") -> T.Var:
    """``activation(W x + b)`` over the last axis of ``x``."""
    try:
        act = T.ACTIVATIONS[activation]
    except KeyError:
        raise ValueError(f"unknown activation {activation!r}") from None
    return act(T.linear(x, W, b))


def gru_cell(x, h, Wz, bz, Wr, br, Wh, bh) -> T.Var:
    xh = T.concat([x, h])
    z = dense_forward(xh, Wz, bz, "sigmoid")
    r = dense_forward(xh, Wr, br, "sigmoid")
    h_tilde = dense_forward(T.concat([x, r * h]), Wh, bh, "tanh")
    return (1.0 - z) * h + z * h_tilde


def lstm_cell(x, h, c, Wi, bi, Wf, bf, Wo, bo, Wg, bg) -> tuple[T.Var, T.Var]:
    xh = T.concat([x, h])
    i = dense_forward(xh, Wi, bi, "sigmoid")
    f = dense_forward(xh, Wf, bf, "sigmoid")
    o = dense_forward(xh, Wo, bo, "sigmoid")
    g = dense_forward(xh, Wg, bg, "tanh")
    c_new = f * c + i * g
    return o * T.tanh(c_new), c_new


class Dense:
    def __init__(self, store: ParameterStore, name: str, n_in: int, n_out: int, activation: str = "none"):
        self.W = store.add(f"{name}.W", (n_out, n_in))
        self.b = store.add(f"{name}.b", (n_out,), role="bias")
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation

    def __call__(self, tape: T.Tape, x) -> T.Var:
        return dense_forward(x, tape.watch(self.W), tape.watch(self.b), self.activation)


class GRUCell:
    """Gated recurrent unit; every gate reads the concatenation ``[x; h]``."""

    GATES = ("z", "r", "h")

    def __init__(self, store: ParameterStore, name: str, n_in: int, n_hidden: int):
        self.n_in, self.n_hidden = n_in, n_hidden
        self.params = []
        for gate in self.GATES:
            self.params.append(store.add(f"{name}.W_{gate}", (n_hidden, n_in + n_hidden)))
            self.params.append(store.add(f"{name}.b_{gate}", (n_hidden,), role="bias"))

    def __call__(self, tape: T.Tape, x, h) -> T.Var:
        _check_width("GRU input", x, self.n_in)
        _check_width("GRU hidden", h, self.n_hidden)
        return gru_cell(x, h, *(tape.watch(p) for p in self.params))


class LSTMCell:
    GATES = ("i", "f", "o", "g")

    def __init__(self, store: ParameterStore, name: str, n_in: int, n_hidden: int):
        self.n_in, self.n_hidden = n_in, n_hidden
        self.params = []
        for gate in self.GATES:
            self.params.append(store.add(f"{name}.W_{gate}", (n_hidden, n_in + n_hidden)))
            self.params.append(store.add(f"{name}.b_{gate}", (n_hidden,), role="bias"))

    def zero_state(self, batch: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        shape = (self.n_hidden,) if batch is None else (batch, self.n_hidden)
        return np.zeros(shape), np.zeros(shape)

    def __call__(self, tape: T.Tape, x, state) -> tuple[T.Var, T.Var]:
        h, c = state
        _check_width("LSTM input", x, self.n_in)
        _check_width("LSTM hidden", h, self.n_hidden)
        return lstm_cell(x, h, c, *(tape.watch(p) for p in self.params))


def _check_width(what: str, x, width: int) -> None:
    shape = x.shape if isinstance(x, T.Var) else np.shape(x)
    if shape[-1] != width:
        raise ValueError(f"{what} width mismatch: got shape {shape}, expected last axis {width}")
