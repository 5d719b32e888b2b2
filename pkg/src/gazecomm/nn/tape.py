"""Tape-based reverse-mode differentiation over float64 numpy arrays.

A :class:`Tape` records every operation applied to :class:`Var` objects during
one forward pass. :func:`backward` walks the tape in reverse, accumulates
gradients into the watched :class:`~gazecomm.nn.params.Parameter` objects and
clears the tape.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


class TapeError(RuntimeError):
    pass


class Var:
    """A node of the computation graph: a value plus how to push gradients back."""

    __slots__ = ("value", "grad", "tape", "parents", "backward_fn", "param")

    def __init__(self, value: Array, tape: "Tape | None" = None, parents=(), backward_fn=None, param=None):
        self.value = value
        self.grad: Array | None = None
        self.tape = tape
        self.parents: tuple[Var, ...] = parents
        self.backward_fn: Callable[[Array], Sequence[Array | None]] | None = backward_fn
        self.param = param

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(shape={self.value.shape}, param={getattr(self.param, 'name', None)})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __getitem__(self, index):
        return take(self, index)


class Tape:
    """Records operations of a single forward pass."""

    def __init__(self) -> None:
        self.nodes: list[Var] = []
        self._watched: dict[str, Var] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def watch(self, param) -> Var:
        """Return the leaf variable bound to ``param`` (one per parameter per tape)."""
        var = self._watched.get(param.name)
        if var is None:
            var = Var(param.value, self, param=param)
            self._watched[param.name] = var
            self.nodes.append(var)
        return var

    def record(self, value: Array, parents: tuple, backward_fn) -> Var:
        if not np.all(np.isfinite(value)):
            raise FloatingPointError("non-finite value produced during forward pass")
        var = Var(value, self, parents, backward_fn)
        self.nodes.append(var)
        return var

    def clear(self) -> None:
        self.nodes = []
        self._watched = {}


def backward(loss: Var) -> None:
    """Populate ``param.grad`` for every parameter that ``loss`` depends on."""
    tape = loss.tape
    if tape is None or len(tape) == 0:
        raise TapeError("backward called with an empty tape")
    if loss.value.size != 1:
        raise TapeError(f"loss must be a scalar, got shape {loss.value.shape}")
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape.nodes):
        if node.grad is None:
            continue
        if node.backward_fn is not None:
            grads = node.backward_fn(node.grad)
            for parent, g in zip(node.parents, grads):
                if g is None or parent.tape is None:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=np.float64, copy=True)
                else:
                    parent.grad = parent.grad + g
        if node.param is not None:
            node.param.grad += node.grad
    for node in tape.nodes:
        node.grad = None
    tape.clear()


def _tape_of(*items) -> Tape | None:
    for item in items:
        if isinstance(item, Var) and item.tape is not None:
            return item.tape
    return None


def _as_var(x) -> Var:
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=np.float64))


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _make(value: Array, parents: tuple[Var, ...], backward_fn) -> Var:
    tape = _tape_of(*parents)
    if tape is None:
        return Var(value)
    return tape.record(value, parents, backward_fn)


# --- elementwise ------------------------------------------------------------


def add(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    sa, sb = a.value.shape, b.value.shape
    return _make(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    sa, sb = a.value.shape, b.value.shape
    return _make(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    av, bv = a.value, b.value
    return _make(av * bv, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def sigmoid(x) -> Var:
    x = _as_var(x)
    # split by sign so neither branch overflows
    v = x.value
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x) -> Var:
    x = _as_var(x)
    out = np.tanh(x.value)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x) -> Var:
    x = _as_var(x)
    mask = x.value > 0
    return _make(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def identity(x) -> Var:
    return _as_var(x)


ACTIVATIONS = {"none": identity, "relu": relu, "sigmoid": sigmoid, "tanh": tanh}


# --- structural -------------------------------------------------------------


def linear(x, W, b=None) -> Var:
    """Affine map over the last axis: ``x @ W.T + b``.

    einsum without path optimisation keeps each output row independent of the
    other rows in the batch, so permuting rows permutes results bit-exactly.
    """
    x, W = _as_var(x), _as_var(W)
    xv, Wv = x.value, W.value
    if xv.shape[-1] != Wv.shape[1]:
        raise ValueError(f"shape mismatch: input {xv.shape} vs weight {Wv.shape}")
    out = np.einsum("...i,oi->...o", xv, Wv)

    def grad(g):
        gx = g @ Wv
        gW = g.reshape(-1, g.shape[-1]).T @ xv.reshape(-1, xv.shape[-1])
        return gx, gW

    y = _make(out, (x, W), grad)
    if b is not None:
        b = _as_var(b)
        if b.value.shape != (Wv.shape[0],):
            raise ValueError(f"shape mismatch: bias {b.value.shape} vs weight {Wv.shape}")
        y = add(y, b)
    return y


def concat(items: Sequence, axis: int = -1) -> Var:
    vars_ = [_as_var(i) for i in items]
    values = [v.value for v in vars_]
    out = np.concatenate(values, axis=axis)
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]

    def grad(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tuple(vars_), grad)


def take(x, index) -> Var:
    x = _as_var(x)
    shape = x.value.shape
    if isinstance(index, np.ndarray) and index.dtype == bool:
        index = np.nonzero(index)

    def grad(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return _make(np.array(x.value[index]), (x,), grad)


def broadcast_to(x, shape: tuple[int, ...]) -> Var:
    x = _as_var(x)
    src = x.value.shape
    return _make(np.broadcast_to(x.value, shape).copy(), (x,), lambda g: (_unbroadcast(g, src),))


def sum_all(x) -> Var:
    x = _as_var(x)
    shape = x.value.shape
    return _make(np.asarray(x.value.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean_all(x) -> Var:
    x = _as_var(x)
    shape, n = x.value.shape, x.value.size
    return _make(np.asarray(x.value.mean()), (x,), lambda g: (np.full(shape, float(g) / n),))


def sorted_sum(x, axis: int = 0) -> Var:
    """Sum along ``axis`` after sorting, so the result ignores term order exactly."""
    x = _as_var(x)
    shape = x.value.shape
    out = np.sort(x.value, axis=axis).sum(axis=axis)
    return _make(out, (x,), lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape),))


# --- losses -----------------------------------------------------------------


def softmax(logits: Array) -> Array:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: Array) -> Array:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, targets) -> Var:
    """Mean of ``-log softmax(logits)[target]`` over rows (a single row is allowed)."""
    logits = _as_var(logits)
    lv = logits.value
    single = lv.ndim == 1
    rows = lv[None, :] if single else lv
    t = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    k = rows.shape[-1]
    if t.shape[0] != rows.shape[0]:
        raise ValueError(f"{t.shape[0]} targets for {rows.shape[0]} rows")
    if np.any(t < 0) or np.any(t >= k):
        raise ValueError(f"target out of range [0, {k}): {t.tolist()}")
    logp = log_softmax(rows)
    n = rows.shape[0]
    loss = -logp[np.arange(n), t].mean()

    def grad(g):
        d = np.exp(logp)
        d[np.arange(n), t] -= 1.0
        d *= float(g) / n
        return (d[0] if single else d,)

    return _make(np.asarray(loss), (logits,), grad)


BCE_EPS = 1e-7


def binary_cross_entropy(p, t) -> Var:
    """Mean binary cross entropy with ``p`` clamped to ``[eps, 1 - eps]``."""
    p = _as_var(p)
    tv = np.asarray(t, dtype=np.float64)
    pv = p.value
    if pv.shape != tv.shape:
        raise ValueError(f"shape mismatch: probabilities {pv.shape} vs targets {tv.shape}")
    q = np.clip(pv, BCE_EPS, 1.0 - BCE_EPS)
    inside = (pv >= BCE_EPS) & (pv <= 1.0 - BCE_EPS)
    n = max(pv.size, 1)
    loss = -(tv * np.log(q) + (1.0 - tv) * np.log(1.0 - q)).mean() if pv.size else 0.0

    def grad(g):
        d = (-tv / q + (1.0 - tv) / (1.0 - q)) * inside
        return (d * float(g) / n,)

    return _make(np.asarray(loss), (p,), grad)
