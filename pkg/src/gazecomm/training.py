"""Training and evaluation loops for the atomic model and the event network.

One SGD step is taken per 5-frame window (atomic level) or per episode (event
level). The learning rate follows the step-decay schedule per epoch and the
parameters with the best validation top-1 are kept.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .event import EventNet, event_loss, frequency_vector, transition_vector
from .graph import ATOMIC_NAMES, EVENT_NAMES, Episode
from .metrics import MetricsReport, build_report
from .model import AtomicConfig, AtomicModel, check_raw_width, episode_atomic_predictions
from .nn import tape as T
from .nn.optim import NonFiniteError, lr_schedule, sgd_step
from .nn.params import atomic_write_text
from .temporal import episode_windows

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "lr", "train_loss", "val_loss", "val_top1")


class DataError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    iterations: int = 2
    window_len: int = 5
    mode: str = "explicit"
    temporal: bool = True
    lambda_adj: float = 1.0
    seed: int = 0
    lr: float = 0.1
    lr_decay: float = 0.1
    raw_dim: int = 8
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    data: str | None = None
    val_data: str | None = None
    out: str | None = None
    log: str | None = None

    def __post_init__(self) -> None:
        self.split = tuple(float(s) for s in self.split)
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lambda_adj < 0:
            raise ValueError(f"lambda_adj must be >= 0, got {self.lambda_adj}")
        if self.mode not in ("explicit", "implicit"):
            raise ValueError(f"mode must be explicit or implicit, got {self.mode!r}")
        if self.iterations < 1 or self.window_len < 1:
            raise ValueError("iterations and window_len must be >= 1")

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**payload)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d

    def atomic_config(self) -> AtomicConfig:
        return AtomicConfig(
            raw_dim=self.raw_dim,
            iterations=self.iterations,
            mode=self.mode,
            temporal=self.temporal,
            window_len=self.window_len,
        )


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch])


def format_log(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=LOG_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in LOG_COLUMNS})
    return buf.getvalue()


def write_log(path: str | os.PathLike, rows: list[dict]) -> None:
    atomic_write_text(path, format_log(rows))


# --- atomic level ------------------------------------------------------------


def atomic_pass(model: AtomicModel, episodes: list[Episode], lambda_adj: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean window loss plus stacked probabilities and targets, without updates."""
    losses, probs, gts = [], [], []
    for ep in episodes:
        for frames in episode_windows(ep, model.config.window_len):
            tape = T.Tape()
            total, _, _, out = model.window_loss(tape, frames, lambda_adj)
            losses.append(float(total.value))
            for g, logits in zip(frames, out.logits):
                probs.append(T.softmax(logits.value))
                gts.append(g.atomic_targets())
            tape.clear()
    if not losses:
        return float("nan"), np.zeros((0, len(ATOMIC_NAMES))), np.zeros(0, dtype=np.int64)
    return float(np.mean(losses)), np.concatenate(probs), np.concatenate(gts)


def train_atomic(config: TrainConfig, train: list[Episode], val: list[Episode]) -> tuple[AtomicModel, list[dict]]:
    if not train:
        raise DataError("empty training set")
    for ep in train + val:
        if not ep.labeled:
            raise DataError(f"episode {ep.episode_id} has no atomic labels")
    model = AtomicModel(config.atomic_config(), seed=config.seed)
    check_raw_width(model, train + val)
    lambda_adj = config.lambda_adj if config.mode == "explicit" else 0.0
    windows = [(ep.episode_id, w) for ep in train for w in episode_windows(ep, config.window_len)]

    rows: list[dict] = []
    best_top1, best_values = -1.0, model.store.copy_values()
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config.lr, config.lr_decay)
        order = _epoch_rng(config.seed, epoch).permutation(len(windows))
        losses = []
        for step, i in enumerate(order):
            ep_id, frames = windows[i]
            tape = T.Tape()
            try:
                total, _, _, _ = model.window_loss(tape, frames, lambda_adj)
                T.backward(total)
                sgd_step(model.store, lr)
            except FloatingPointError as exc:
                raise NonFiniteError(f"epoch {epoch}, window {step} (episode {ep_id}): {exc}") from None
            losses.append(float(total.value))
        val_loss, probs, gts = atomic_pass(model, val, lambda_adj)
        val_top1 = build_report(probs, gts, ATOMIC_NAMES).top1 if len(gts) else 0.0
        row = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses)), "val_loss": val_loss, "val_top1": val_top1}
        rows.append(row)
        log.info("atomic epoch %d lr=%g train_loss=%.4f val_loss=%.4f val_top1=%.4f", epoch, lr, row["train_loss"], val_loss, val_top1)
        if val_top1 > best_top1:
            best_top1, best_values = val_top1, model.store.copy_values()
    model.store.load_values(best_values)
    return model, rows


def evaluate_atomic(model: AtomicModel, episodes: list[Episode]) -> tuple[MetricsReport, list[dict]]:
    """Metrics over every (frame, human) prediction, plus the prediction dump."""
    check_raw_width(model, episodes)
    dump = prediction_dump(model, episodes)
    gt_lookup = {
        (ep.episode_id, g.frame_idx, h): int(g.gt_atomic[h]) for ep in episodes for g in ep.frames for h in g.human_ids
    }
    rows = [r for r in dump if "human_id" in r]
    probs = np.array([r["probs"] for r in rows]).reshape(-1, len(ATOMIC_NAMES))
    gts = np.array([gt_lookup[(r["episode_id"], r["frame_idx"], r["human_id"])] for r in rows], dtype=np.int64)
    return build_report(probs, gts, ATOMIC_NAMES), dump


def prediction_dump(model: AtomicModel, episodes: list[Episode]) -> list[dict]:
    """Per-human prediction records, each frame followed by its connectivity record."""
    records = []
    for ep in episodes:
        for p in model.predict_episode(ep):
            for i, h in enumerate(p.human_ids):
                records.append(
                    {
                        "episode_id": ep.episode_id,
                        "frame_idx": p.frame_idx,
                        "human_id": h,
                        "probs": p.readout.probs[i].tolist(),
                        "label": ATOMIC_NAMES[int(p.readout.label[i])],
                        "top2": [ATOMIC_NAMES[int(k)] for k in p.readout.top2[i]],
                    }
                )
            records.append(
                {
                    "episode_id": ep.episode_id,
                    "frame_idx": p.frame_idx,
                    "node_ids": list(p.node_ids),
                    "node_kinds": list(p.node_kinds),
                    "adjacency": p.adjacency.tolist(),
                }
            )
    return records


# --- event level -------------------------------------------------------------


def atomic_source_labels(episodes: list[Episode], atomic_model: AtomicModel | None) -> list[list[list[int]]]:
    """Per-episode per-human label streams: ground truth, or predictions of a frozen model."""
    if atomic_model is None:
        for ep in episodes:
            if not ep.labeled:
                raise DataError(f"episode {ep.episode_id} has no ground-truth atomic labels")
        return [[[int(l) for l in seq] for seq in ep.atomic_sequences()] for ep in episodes]
    check_raw_width(atomic_model, episodes)
    return [episode_atomic_predictions(atomic_model, ep) for ep in episodes]


def _event_inputs(streams):
    return [(transition_vector(s), frequency_vector(s)) for s in streams]


def event_pass(net: EventNet, inputs, targets) -> tuple[float, np.ndarray]:
    losses, probs = [], []
    for (tv, fv), t in zip(inputs, targets):
        tape = T.Tape()
        logits = net.forward(tape, tv, fv)
        losses.append(float(event_loss(logits, t).value))
        probs.append(T.softmax(logits.value))
        tape.clear()
    if not losses:
        return float("nan"), np.zeros((0, len(EVENT_NAMES)))
    return float(np.mean(losses)), np.stack(probs)


def train_event(
    config: TrainConfig,
    train: list[Episode],
    val: list[Episode] | None = None,
    atomic_model: AtomicModel | None = None,
) -> tuple[EventNet, list[dict]]:
    """Train the event network on ground-truth (``atomic_model=None``) or predicted atomics."""
    if not train:
        raise DataError("empty training set")
    val = val or []
    net = EventNet(seed=config.seed)
    inputs = _event_inputs(atomic_source_labels(train, atomic_model))
    targets = [int(ep.event) for ep in train]
    val_inputs = _event_inputs(atomic_source_labels(val, atomic_model)) if val else []
    val_targets = np.array([int(ep.event) for ep in val], dtype=np.int64)

    rows: list[dict] = []
    best_top1, best_values = -1.0, net.store.copy_values()
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config.lr, config.lr_decay)
        losses = []
        for step, i in enumerate(_epoch_rng(config.seed, epoch).permutation(len(inputs))):
            tape = T.Tape()
            try:
                loss = event_loss(net.forward(tape, *inputs[i]), targets[i])
                T.backward(loss)
                sgd_step(net.store, lr)
            except FloatingPointError as exc:
                raise NonFiniteError(f"epoch {epoch}, step {step} (episode {train[i].episode_id}): {exc}") from None
            losses.append(float(loss.value))
        if val:
            val_loss, probs = event_pass(net, val_inputs, val_targets)
            val_top1 = build_report(probs, val_targets, EVENT_NAMES).top1
        else:
            val_loss, val_top1 = float("nan"), 0.0
        rows.append({"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses)), "val_loss": val_loss, "val_top1": val_top1})
        log.info("event epoch %d lr=%g train_loss=%.4f val_top1=%.4f", epoch, lr, rows[-1]["train_loss"], val_top1)
        if not val or val_top1 > best_top1:
            best_top1, best_values = val_top1, net.store.copy_values()
    net.store.load_values(best_values)
    return net, rows


def evaluate_event(net: EventNet, episodes: list[Episode], atomic_model: AtomicModel | None = None) -> MetricsReport:
    inputs = _event_inputs(atomic_source_labels(episodes, atomic_model))
    targets = np.array([int(ep.event) for ep in episodes], dtype=np.int64)
    _, probs = event_pass(net, inputs, targets)
    return build_report(probs, targets, EVENT_NAMES)
