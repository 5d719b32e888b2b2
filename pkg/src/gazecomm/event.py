"""Event-level classification from atomic-label streams.

A stream is summarised by two fixed-width vectors, which an encoder-decoder of
fully connected layers maps to event logits:

* transition vector (30-d): normalised counts of label changes ``a -> b``,
  ``a != b``, between consecutive frames of the same agent;
* frequency vector (6-d): normalised histogram over all (frame, agent) labels.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .graph import ATOMIC_NAMES, EVENT_NAMES, EventLabel
from .nn import tape as T
from .nn.layers import Dense
from .nn.params import CheckpointError, ParameterStore, init_params, load_json, save_json
from .temporal import readout

N_ATOMIC = len(ATOMIC_NAMES)
N_EVENT = len(EVENT_NAMES)
TRANSITION_DIM = N_ATOMIC * (N_ATOMIC - 1)


def transition_index(a: int, b: int) -> int:
    """Position of ``a -> b`` in the row-major 6x6 matrix with its diagonal removed."""
    if a == b:
        raise ValueError("self-transitions are not represented")
    return a * (N_ATOMIC - 1) + (b if b < a else b - 1)


def _check_streams(labels: Sequence[Sequence[int]]) -> None:
    if not labels or all(len(s) == 0 for s in labels):
        raise ValueError("empty atomic-label input")


def transition_vector(labels: Sequence[Sequence[int]]) -> np.ndarray:
    _check_streams(labels)
    counts = np.zeros(TRANSITION_DIM)
    for seq in labels:
        seq = np.asarray(seq, dtype=np.int64)
        prev, nxt = seq[:-1], seq[1:]
        change = prev != nxt
        if np.any(change):
            a, b = prev[change], nxt[change]
            idx = a * (N_ATOMIC - 1) + np.where(b < a, b, b - 1)
            np.add.at(counts, idx, 1.0)
    total = counts.sum()
    return counts / total if total > 0 else counts


def frequency_vector(labels: Sequence[Sequence[int]]) -> np.ndarray:
    _check_streams(labels)
    counts = np.zeros(N_ATOMIC)
    for seq in labels:
        np.add.at(counts, np.asarray(seq, dtype=np.int64), 1.0)
    return counts / counts.sum()


@dataclass(frozen=True)
class EventConfig:
    transition_hidden: int = 16
    frequency_hidden: int = 8


class EventNet:
    kind = "event"

    def __init__(self, config: EventConfig = EventConfig(), seed: int = 0):
        self.config = config
        self.store = ParameterStore(seed)
        self.encoder_T = Dense(self.store, "event.encoder_T", TRANSITION_DIM, config.transition_hidden, "relu")
        self.encoder_F = Dense(self.store, "event.encoder_F", N_ATOMIC, config.frequency_hidden, "relu")
        self.decoder = Dense(self.store, "event.decoder", config.transition_hidden + config.frequency_hidden, N_EVENT)
        init_params(self.store, seed)

    def forward(self, tape: T.Tape, tv, fv) -> T.Var:
        if np.shape(tv)[-1] != TRANSITION_DIM or np.shape(fv)[-1] != N_ATOMIC:
            raise ValueError(f"expected widths ({TRANSITION_DIM}, {N_ATOMIC}), got {np.shape(tv)}, {np.shape(fv)}")
        return self.decoder(tape, T.concat([self.encoder_T(tape, tv), self.encoder_F(tape, fv)]))

    def to_payload(self, extra: dict | None = None) -> dict:
        payload = self.store.to_dict()
        payload["model"] = {"kind": self.kind, "config": asdict(self.config), **(extra or {})}
        return payload

    def save(self, path: str | os.PathLike, extra: dict | None = None) -> None:
        save_json(path, self.to_payload(extra))

    @classmethod
    def from_payload(cls, payload: dict) -> "EventNet":
        meta = payload.get("model")
        if not isinstance(meta, dict) or meta.get("kind") != cls.kind:
            raise CheckpointError(f"not an event checkpoint (model kind {meta and meta.get('kind')!r})")
        try:
            config = EventConfig(**meta["config"])
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"bad model config in checkpoint: {exc}") from None
        net = cls(config, seed=payload.get("seed", 0))
        net.store.update_from_dict(payload)
        return net

    @classmethod
    def load(cls, path: str | os.PathLike) -> "EventNet":
        return cls.from_payload(load_json(path))


def event_forward(tv, fv, net: EventNet, tape: T.Tape | None = None) -> T.Var:
    return net.forward(tape or T.Tape(), tv, fv)


def event_loss(logits, gt_event: int) -> T.Var:
    return T.softmax_cross_entropy(logits, int(gt_event))


def classify_event(labels: Sequence[Sequence[int]], net: EventNet) -> tuple[EventLabel, np.ndarray]:
    logits = event_forward(transition_vector(labels), frequency_vector(labels), net)
    r = readout(logits.value)
    return EventLabel(int(r.label)), r.probs
