from __future__ import annotations

from decimal import Decimal

import numpy as np

from .params import ParameterStore


class NonFiniteError(FloatingPointError):
    pass


def lr_schedule(epoch: int, base: float = 0.1, decay: float = 0.1) -> float:
    """Step decay: ``base * decay**epoch`` (0.1, 0.01, 0.001, ... by default)."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    # decimal arithmetic keeps 0.1 * 0.1 from becoming 0.010000000000000002
    return float(Decimal(repr(base)) * Decimal(repr(decay)) ** epoch)


def sgd_step(store: ParameterStore, lr: float) -> ParameterStore:
    """Plain SGD, no momentum. Grads are zeroed afterwards."""
    for p in store:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"non-finite gradient in parameter {p.name!r}")
    for p in store:
        p.value = p.value - lr * p.grad
        p.zero_grad()
    return store
