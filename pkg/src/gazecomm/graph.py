"""Per-frame social graphs: entities, labels, features and ground-truth attention.

Node 0 of every :class:`SocialGraph` is the scene node; human nodes follow in
annotation order. Objects are kept in the annotations but never become nodes:
attention to an object (or to nothing) is recorded as a scene-to-human link
``a[s, v] = 1`` so that the scene column stays empty.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .nn import tape as T
from .nn.params import atomic_write_text

NODE_DIM = 12  # V
EDGE_DIM = 24  # E
COMPRESSED_DIM = 6
POSITION_DIM = 6
SCENE_POSITION = (0.5, 0.5, 1.0, 1.0, 0.0, 0.0)


class AnnotationError(ValueError):
    pass


class GraphError(ValueError):
    pass


class AtomicLabel(enum.IntEnum):
    single = 0
    mutual = 1
    avert = 2
    refer = 3
    follow = 4
    share = 5


class EventLabel(enum.IntEnum):
    NonCommunicative = 0
    MutualGaze = 1
    GazeAversion = 2
    GazeFollowing = 3
    JointAttention = 4


ATOMIC_NAMES = [label.name for label in AtomicLabel]
EVENT_NAMES = [label.name for label in EventLabel]
ENTITY_KINDS = ("scene", "human", "object")


@dataclass(frozen=True)
class Entity:
    id: int
    kind: str
    bbox: tuple[float, float, float, float]
    attention: int | None = None
    raw_feature: tuple[float, ...] = ()

    @property
    def center(self) -> tuple[float, float]:
        x, y, w, h = self.bbox
        return x + w / 2.0, y + h / 2.0


def surrogate_extractor(entity: Entity) -> tuple[np.ndarray, tuple[float, float]]:
    """Raw feature plus gaze direction; the surrogate layout stores gaze in raw[0:2]."""
    raw = np.asarray(entity.raw_feature, dtype=np.float64)
    if entity.kind != "human":
        return raw, (0.0, 0.0)
    return raw, (float(raw[0]), float(raw[1]))


Extractor = Callable[[Entity], "tuple[np.ndarray, tuple[float, float]]"]


def position_vector(entity: Entity, gaze: tuple[float, float]) -> np.ndarray:
    if entity.kind == "scene":
        return np.array(SCENE_POSITION)
    cx, cy = entity.center
    _, _, w, h = entity.bbox
    return np.array([cx, cy, w, h, gaze[0], gaze[1]])


def init_node_feature(raw, position, W, b) -> T.Var:
    """``[W raw + b ; position]`` -- a trainable compression to 6-d plus the 6-d position.

    Works on a single node (1-d inputs) or a batch of nodes (rows).
    """
    raw_width = raw.shape[-1] if isinstance(raw, T.Var) else np.shape(raw)[-1]
    w_width = (W.value if isinstance(W, T.Var) else np.asarray(W)).shape[1]
    if raw_width != w_width:
        raise ValueError(f"raw feature width {raw_width} != configured width {w_width}")
    return T.concat([T.linear(raw, W, b), position])


def init_edge_feature(x_v, x_w) -> T.Var:
    return T.concat([x_v, x_w])


def edge_feature_tensor(x) -> T.Var:
    """All ordered pairs at once: entry ``[v, w]`` is ``[x_v ; x_w]`` (diagonal unused)."""
    n = x.shape[0]
    src = T.broadcast_to(T.take(x, (slice(None), None)), (n, n, x.shape[1]))
    dst = T.broadcast_to(T.take(x, (None, slice(None))), (n, n, x.shape[1]))
    return T.concat([src, dst])


@dataclass(eq=False)
class SocialGraph:
    node_ids: tuple[int, ...]
    node_kinds: tuple[str, ...]
    raw: np.ndarray
    position: np.ndarray
    node_features: np.ndarray | None = None
    edge_features: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    gt_adjacency: np.ndarray | None = None
    gt_atomic: dict[int, AtomicLabel] | None = None
    entities: tuple[Entity, ...] = ()
    frame_idx: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def human_ids(self) -> tuple[int, ...]:
        return self.node_ids[1:]

    def atomic_targets(self) -> np.ndarray:
        if self.gt_atomic is None:
            raise GraphError(f"frame {self.frame_idx} has no atomic labels")
        return np.array([int(self.gt_atomic[h]) for h in self.human_ids], dtype=np.int64)


def build_graph(
    entities: Sequence[Entity],
    extractor: Extractor = surrogate_extractor,
    compressor: tuple[np.ndarray, np.ndarray] | None = None,
    atomic: dict[int, AtomicLabel] | None = None,
    frame_idx: int = 0,
) -> SocialGraph:
    """Build the complete graph over scene + humans for one annotated frame.

    ``compressor`` is the ``(W, b)`` used to materialise ``node_features``; when
    omitted a zero compressor is used, so the first six entries are zero.
    """
    by_id: dict[int, Entity] = {}
    for e in entities:
        if e.id in by_id:
            raise GraphError(f"duplicate entity id {e.id}")
        if e.kind not in ENTITY_KINDS:
            raise GraphError(f"entity {e.id}: unknown kind {e.kind!r}")
        by_id[e.id] = e
    scenes = [e for e in entities if e.kind == "scene"]
    humans = [e for e in entities if e.kind == "human"]
    if len(scenes) != 1:
        raise GraphError(f"expected exactly one scene entity, found {len(scenes)}")
    if not humans:
        raise GraphError("frame has no human entities")
    for e in entities:
        if e.attention is not None:
            if e.attention not in by_id:
                raise GraphError(f"entity {e.id} attends to unknown entity {e.attention}")
            if e.attention == e.id:
                raise GraphError(f"entity {e.id} attends to itself")

    nodes = [scenes[0], *humans]
    raws, positions = [], []
    for e in nodes:
        raw, gaze = extractor(e)
        raws.append(raw)
        positions.append(position_vector(e, gaze))
    raw = np.stack(raws)
    position = np.stack(positions)

    if compressor is None:
        compressor = (np.zeros((COMPRESSED_DIM, raw.shape[1])), np.zeros(COMPRESSED_DIM))
    x = init_node_feature(raw, position, *compressor).value
    n = len(nodes)
    edges = {(v, w): init_edge_feature(x[v], x[w]).value for v in range(n) for w in range(n) if v != w}

    index = {e.id: i for i, e in enumerate(nodes)}
    adjacency = np.zeros((n, n))
    for v, e in enumerate(nodes):
        if e.kind != "human":
            continue
        target = by_id.get(e.attention) if e.attention is not None else None
        if target is not None and target.kind == "human":
            adjacency[v, index[target.id]] = 1.0
        else:
            adjacency[0, v] = 1.0

    if atomic is not None:
        missing = [h.id for h in humans if h.id not in atomic]
        if missing:
            raise GraphError(f"frame {frame_idx}: no atomic label for humans {missing}")
        atomic = {h.id: AtomicLabel(atomic[h.id]) for h in humans}

    return SocialGraph(
        node_ids=tuple(e.id for e in nodes),
        node_kinds=tuple(e.kind for e in nodes),
        raw=raw,
        position=position,
        node_features=x,
        edge_features=edges,
        gt_adjacency=adjacency,
        gt_atomic=atomic,
        entities=tuple(entities),
        frame_idx=frame_idx,
    )


def validate(graph: SocialGraph) -> list[str]:
    """Return a list of invariant violations (empty when the graph is well formed)."""
    problems = []
    n = graph.n_nodes
    if graph.node_kinds.count("scene") != 1 or graph.node_kinds[:1] != ("scene",):
        problems.append("node 0 must be the only scene node")
    if "object" in graph.node_kinds:
        problems.append("objects must not be graph nodes")
    if len(set(graph.node_ids)) != n:
        problems.append("node ids must be unique")
    if graph.node_features is None or graph.node_features.shape != (n, NODE_DIM):
        problems.append(f"node_features must have shape ({n}, {NODE_DIM})")
    expected = {(v, w) for v in range(n) for w in range(n) if v != w}
    have = set(graph.edge_features)
    if have - expected:
        problems.append(f"unexpected edges (self-loops or out of range): {sorted(have - expected)}")
    if expected - have:
        problems.append(f"missing edge features for {sorted(expected - have)}")
    bad_width = [k for k, f in graph.edge_features.items() if np.shape(f) != (EDGE_DIM,)]
    if bad_width:
        problems.append(f"edge features must have width {EDGE_DIM}: {sorted(bad_width)}")
    A = graph.gt_adjacency
    if A is not None:
        if A.shape != (n, n):
            problems.append(f"gt_adjacency must have shape ({n}, {n})")
        else:
            if not np.all((A == 0) | (A == 1)):
                problems.append("gt_adjacency entries must be 0 or 1")
            if np.any(np.diag(A) != 0):
                problems.append("gt_adjacency diagonal must be zero")
            if np.any(A[:, 0] != 0):
                problems.append("gt_adjacency scene column must be zero")
    if graph.gt_atomic is not None and set(graph.gt_atomic) != set(graph.human_ids):
        problems.append("gt_atomic must label exactly the human nodes")
    return problems


@dataclass(eq=False)
class Episode:
    episode_id: str
    frames: list[SocialGraph]
    event: EventLabel

    def __post_init__(self) -> None:
        if not self.frames:
            raise GraphError(f"episode {self.episode_id}: no frames")
        ids = set(self.frames[0].human_ids)
        for g in self.frames[1:]:
            if set(g.human_ids) != ids:
                raise GraphError(f"episode {self.episode_id}: human set changes at frame {g.frame_idx}")

    @property
    def human_ids(self) -> tuple[int, ...]:
        return self.frames[0].human_ids

    @property
    def labeled(self) -> bool:
        return all(g.gt_atomic is not None for g in self.frames)

    def atomic_sequences(self) -> list[list[AtomicLabel]]:
        """Ground-truth atomic labels, one time-ordered list per human."""
        return [[g.gt_atomic[h] for g in self.frames] for h in self.human_ids]

    def to_records(self) -> list[dict]:
        return [frame_record(self.episode_id, g, self.event) for g in self.frames]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Episode):
            return NotImplemented
        return self.to_records() == other.to_records()


# --- annotation files (JSON Lines, one frame per line) ----------------------

RECORD_KEYS = ("video_id", "frame_idx", "entities", "atomic", "event")
ENTITY_KEYS = ("id", "kind", "bbox", "attention", "raw_feature")


def frame_record(video_id: str, graph: SocialGraph, event: EventLabel) -> dict:
    return {
        "video_id": video_id,
        "frame_idx": graph.frame_idx,
        "entities": [
            {
                "id": e.id,
                "kind": e.kind,
                "bbox": list(e.bbox),
                "attention": e.attention,
                "raw_feature": list(e.raw_feature),
            }
            for e in graph.entities
        ],
        "atomic": {str(h): graph.gt_atomic[h].name for h in graph.human_ids} if graph.gt_atomic else {},
        "event": event.name,
    }


def _check_keys(obj, keys: tuple[str, ...], where: str) -> None:
    if not isinstance(obj, dict):
        raise AnnotationError(f"{where}: expected an object")
    unknown = set(obj) - set(keys)
    missing = set(keys) - set(obj)
    if unknown:
        raise AnnotationError(f"{where}: unknown fields {sorted(unknown)}")
    if missing:
        raise AnnotationError(f"{where}: missing fields {sorted(missing)}")


def parse_record(record: dict, where: str = "record", extractor: Extractor = surrogate_extractor):
    _check_keys(record, RECORD_KEYS, where)
    entities = []
    for i, raw in enumerate(record["entities"]):
        _check_keys(raw, ENTITY_KEYS, f"{where} entity {i}")
        bbox = tuple(float(v) for v in raw["bbox"])
        if len(bbox) != 4:
            raise AnnotationError(f"{where} entity {i}: bbox must have 4 values")
        entities.append(
            Entity(
                id=int(raw["id"]),
                kind=raw["kind"],
                bbox=bbox,
                attention=None if raw["attention"] is None else int(raw["attention"]),
                raw_feature=tuple(float(v) for v in raw["raw_feature"]),
            )
        )
    try:
        atomic = {int(k): AtomicLabel[v] for k, v in record["atomic"].items()} or None
        event = EventLabel[record["event"]]
    except KeyError as exc:
        raise AnnotationError(f"{where}: unknown label {exc}") from None
    try:
        graph = build_graph(entities, extractor, atomic=atomic, frame_idx=int(record["frame_idx"]))
    except GraphError as exc:
        raise AnnotationError(f"{where}: {exc}") from None
    return str(record["video_id"]), graph, event


def write_annotations(episodes: Iterable[Episode], path: str | os.PathLike) -> None:
    lines = []
    for ep in episodes:
        for rec in ep.to_records():
            lines.append(json.dumps(rec, ensure_ascii=False))
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_annotations(path: str | os.PathLike, extractor: Extractor = surrogate_extractor) -> list[Episode]:
    """Parse a JSON Lines annotation file; consecutive lines of one video form an episode."""
    episodes: list[Episode] = []
    current: tuple[str, list[SocialGraph], EventLabel] | None = None
    seen: set[str] = set()

    def flush():
        if current is not None:
            episodes.append(Episode(current[0], current[1], current[2]))

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"{where}: malformed JSON ({exc.msg})") from None
            video_id, graph, event = parse_record(record, where, extractor)
            if current is not None and current[0] == video_id:
                if event != current[2]:
                    raise AnnotationError(f"{where}: event label changes within video {video_id}")
                if graph.frame_idx <= current[1][-1].frame_idx:
                    raise AnnotationError(f"{where}: frame_idx not increasing in video {video_id}")
                if set(graph.human_ids) != set(current[1][0].human_ids):
                    raise AnnotationError(f"{where}: human set changes within video {video_id}")
                current[1].append(graph)
                continue
            if video_id in seen:
                raise AnnotationError(f"{where}: video {video_id} is not contiguous")
            flush()
            seen.add(video_id)
            current = (video_id, [graph], event)
    flush()
    return episodes
