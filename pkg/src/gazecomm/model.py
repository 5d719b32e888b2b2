"""The atomic-level model: feature compressor + spatial reasoner + temporal head."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass

import numpy as np

from .graph import COMPRESSED_DIM, Episode, GraphError, SocialGraph, init_node_feature
from .nn import tape as T
from .nn.layers import Dense
from .nn.params import CheckpointError, ParameterStore, init_params, load_json, save_json
from .spatial import PassState, SpatialReasoner, adjacency_loss
from .temporal import Readout, TemporalHead, WindowOutput, atomic_loss, episode_windows, readout


@dataclass(frozen=True)
class AtomicConfig:
    raw_dim: int = 8
    iterations: int = 2
    mode: str = "explicit"
    temporal: bool = True
    window_len: int = 5


@dataclass
class FramePrediction:
    frame_idx: int
    human_ids: tuple[int, ...]
    node_ids: tuple[int, ...]
    node_kinds: tuple[str, ...]
    readout: Readout
    adjacency: np.ndarray  # final-iteration connectivity


class AtomicModel:
    kind = "atomic"

    def __init__(self, config: AtomicConfig = AtomicConfig(), seed: int = 0):
        self.config = config
        self.store = ParameterStore(seed)
        self.compressor = Dense(self.store, "compress", config.raw_dim, COMPRESSED_DIM)
        self.spatial = SpatialReasoner(self.store, config.iterations, config.mode)
        self.head = TemporalHead(self.store, config.window_len, config.temporal)
        init_params(self.store, seed)

    def node_features(self, tape: T.Tape, graph: SocialGraph) -> T.Var:
        W, b = tape.watch(self.compressor.W), tape.watch(self.compressor.b)
        return init_node_feature(graph.raw, graph.position, W, b)

    def run_window(self, tape: T.Tape, frames: list[SocialGraph], trace: list[PassState] | None = None) -> WindowOutput:
        """Spatial reasoning per frame, then the temporal head per human node.

        The recurrent state starts from zero at every window. Frames are causal,
        so padding a short window and discarding the padded outputs is the same
        as running only the real frames.
        """
        ids = frames[0].human_ids
        for g in frames[1:]:
            if g.human_ids != ids:
                raise GraphError(f"inconsistent human ids across window: {ids} vs {g.human_ids}")
        state = self.head.zero_state(len(ids))
        out = WindowOutput([], [], [])
        for g in frames:
            pass_state = PassState() if trace is not None else None
            y, adjacencies = self.spatial.propagate(tape, self.node_features(tape, g), pass_state)
            h, state = self.head.temporal_step(tape, T.take(y, slice(1, None)), state)
            out.frame_indices.append(g.frame_idx)
            out.logits.append(self.head.readout_logits(tape, h))
            out.adjacency.append(adjacencies)
            if trace is not None:
                trace.append(pass_state)
        return out

    def window_loss(self, tape: T.Tape, frames: list[SocialGraph], lambda_adj: float = 1.0):
        """Return ``(total, atomic, adjacency, outputs)``; adjacency is None in implicit mode."""
        out = self.run_window(tape, frames)
        loss_atomic = atomic_loss(out, frames)
        if self.config.mode == "implicit" or lambda_adj == 0.0:
            return loss_atomic, loss_atomic, None, out
        per_frame = [adjacency_loss(adj[-1], g.gt_adjacency) for adj, g in zip(out.adjacency, frames)]
        loss_adj = T.mean_all(T.concat([T.take(v, (None,)) for v in per_frame]))
        return loss_atomic + lambda_adj * loss_adj, loss_atomic, loss_adj, out

    def predict_episode(self, episode: Episode) -> list[FramePrediction]:
        preds = []
        for frames in episode_windows(episode, self.config.window_len):
            tape = T.Tape()
            out = self.run_window(tape, frames)
            for g, logits, adj in zip(frames, out.logits, out.adjacency):
                preds.append(
                    FramePrediction(
                        frame_idx=g.frame_idx,
                        human_ids=g.human_ids,
                        node_ids=g.node_ids,
                        node_kinds=g.node_kinds,
                        readout=readout(logits.value),
                        adjacency=adj[-1].value.copy(),
                    )
                )
            tape.clear()
        return preds

    # --- checkpoints --------------------------------------------------------

    def to_payload(self, extra: dict | None = None) -> dict:
        payload = self.store.to_dict()
        payload["model"] = {"kind": self.kind, "config": asdict(self.config)}
        if extra:
            payload["model"].update(extra)
        return payload

    def save(self, path: str | os.PathLike, extra: dict | None = None) -> None:
        save_json(path, self.to_payload(extra))

    @classmethod
    def from_payload(cls, payload: dict, expect: AtomicConfig | None = None) -> "AtomicModel":
        meta = payload.get("model")
        if not isinstance(meta, dict) or meta.get("kind") != cls.kind:
            raise CheckpointError(f"not an {cls.kind} checkpoint (model kind {meta and meta.get('kind')!r})")
        try:
            config = AtomicConfig(**meta["config"])
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"bad model config in checkpoint: {exc}") from None
        if expect is not None and expect != config:
            raise CheckpointError(f"checkpoint config {config} does not match requested {expect}")
        model = cls(config, seed=payload.get("seed", 0))
        model.store.update_from_dict(payload)
        return model

    @classmethod
    def load(cls, path: str | os.PathLike, expect: AtomicConfig | None = None) -> "AtomicModel":
        return cls.from_payload(load_json(path), expect)


def episode_atomic_predictions(model: AtomicModel, episode: Episode) -> list[list[int]]:
    """Predicted atomic labels as one time-ordered list per human."""
    preds = model.predict_episode(episode)
    return [[int(p.readout.label[i]) for p in preds] for i in range(len(episode.human_ids))]


def check_raw_width(model: AtomicModel, episodes: list[Episode]) -> None:
    for ep in episodes:
        width = ep.frames[0].raw.shape[1]
        if width != model.config.raw_dim:
            raise CheckpointError(
                f"episode {ep.episode_id}: raw feature width {width} != model raw_dim {model.config.raw_dim}"
            )


__all__ = ["AtomicConfig", "AtomicModel", "FramePrediction", "episode_atomic_predictions", "check_raw_width"]
