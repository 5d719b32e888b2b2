"""Per-human LSTM over frame-wise spatial outputs, and the atomic-label readout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import ATOMIC_NAMES, NODE_DIM, Episode, SocialGraph
from .nn import tape as T
from .nn.layers import Dense, LSTMCell
from .nn.params import ParameterStore

N_ATOMIC = len(ATOMIC_NAMES)


class TemporalHead:
    def __init__(self, store: ParameterStore, window_len: int = 5, enabled: bool = True, prefix: str = "temporal"):
        if window_len < 1:
            raise ValueError(f"window_len must be >= 1, got {window_len}")
        self.window_len = window_len
        self.enabled = enabled
        # parameters exist in both configurations so checkpoints share a layout
        self.lstm = LSTMCell(store, f"{prefix}.lstm", NODE_DIM, NODE_DIM)
        self.f_R = Dense(store, f"{prefix}.f_R", NODE_DIM, N_ATOMIC)

    def zero_state(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        return self.lstm.zero_state(batch)

    def temporal_step(self, tape: T.Tape, y, state):
        """One LSTM step; with the temporal module disabled the input passes straight through."""
        if not self.enabled:
            return y, state
        h, c = self.lstm(tape, y, state)
        return h, (h, c)

    def readout_logits(self, tape: T.Tape, h) -> T.Var:
        return self.f_R(tape, h)


def argmax_low(x: np.ndarray) -> np.ndarray:
    """Argmax over the last axis; ties go to the lowest index (np.argmax already does this)."""
    return np.argmax(x, axis=-1)


def topk_indices(probs: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries per row, ties broken toward the lower index."""
    order = np.argsort(-probs, axis=-1, kind="stable")
    return order[..., :k]


@dataclass
class Readout:
    logits: np.ndarray
    probs: np.ndarray
    label: np.ndarray
    top2: np.ndarray


def readout(logits: np.ndarray) -> Readout:
    probs = T.softmax(np.asarray(logits, dtype=np.float64))
    return Readout(np.asarray(logits), probs, argmax_low(probs), topk_indices(probs, 2))


def windows(n_frames: int, window_len: int) -> list[tuple[int, int]]:
    """Non-overlapping ``(start, n_valid)`` windows covering every frame.

    A short final window is conceptually padded by repeating its last frame; the
    padded predictions are discarded, so only ``n_valid`` frames are reported.
    """
    if n_frames < 1:
        raise ValueError("episode has no frames")
    return [(s, min(window_len, n_frames - s)) for s in range(0, n_frames, window_len)]


def pad_window(frames: list[SocialGraph], window_len: int) -> list[SocialGraph]:
    return list(frames) + [frames[-1]] * (window_len - len(frames))


@dataclass
class WindowOutput:
    """Outputs for the valid frames of one window."""

    frame_indices: list[int]
    logits: list[T.Var]  # (n_humans, 6) per frame
    adjacency: list[list[T.Var]]  # per frame, one matrix per iteration


def atomic_loss(out: WindowOutput, frames: list[SocialGraph]) -> T.Var:
    """Mean cross entropy over every (frame, human) pair of the window."""
    if len(frames) != len(out.logits):
        raise ValueError(f"{len(out.logits)} predicted frames but {len(frames)} labeled frames")
    logits = T.concat(out.logits, axis=0)
    targets = np.concatenate([g.atomic_targets() for g in frames])
    return T.softmax_cross_entropy(logits, targets)


def episode_windows(episode: Episode, window_len: int) -> list[list[SocialGraph]]:
    return [episode.frames[s : s + n] for s, n in windows(len(episode.frames), window_len)]
