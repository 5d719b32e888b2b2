"""Procedural gaze-communication episodes that follow the event grammar.

Each episode has a focal pair (initiator, responder) that acts out the phases
of its event; an optional third agent behaves as a bystander with ``single``
gaze. Raw node features are 8-d surrogates of appearance features::

    [gaze_dx, gaze_dy, target_dx, target_dy, noise x 4]

where ``target_d*`` is the offset from the face centre to the gazed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import AtomicLabel, Entity, EventLabel, Episode, build_graph

A, E = AtomicLabel, EventLabel

GRAMMAR: dict[EventLabel, tuple[AtomicLabel, ...]] = {
    E.NonCommunicative: (A.single,),
    E.MutualGaze: (A.mutual,),
    E.GazeAversion: (A.mutual, A.avert, A.single),
    E.GazeFollowing: (A.follow, A.share),
    E.JointAttention: (A.mutual, A.refer, A.follow, A.share, A.mutual),
}

# event-level distribution of the reference dataset, in percent
REFERENCE_EVENT_MIX = {
    E.NonCommunicative: 28.16,
    E.MutualGaze: 24.00,
    E.GazeAversion: 10.00,
    E.GazeFollowing: 10.64,
    E.JointAttention: 27.20,
}

FACE_SIZE = (0.08, 0.10)
OBJECT_SIZE = (0.10, 0.08)


@dataclass(frozen=True)
class Phase:
    labels: tuple[AtomicLabel, AtomicLabel]  # (initiator, responder)
    duration: int


@dataclass(frozen=True)
class PhasePlan:
    event: EventLabel
    phases: tuple[Phase, ...]

    def label_sequence(self) -> list[AtomicLabel]:
        return [p.labels[0] for p in self.phases]


@dataclass(frozen=True)
class GeneratorConfig:
    agents: tuple[int, ...] = (2, 3)
    frames_per_phase: tuple[int, int] = (3, 6)  # inclusive
    position_jitter: float = 0.01
    gaze_jitter_deg: float = 5.0
    label_noise: float = 0.05
    feature_noise: float = 0.05
    raw_dim: int = 8
    seed: int = 0

    def validate(self) -> None:
        if not self.agents or any(n not in (2, 3) for n in self.agents):
            raise ValueError(f"agents must be drawn from {{2, 3}}, got {self.agents}")
        lo, hi = self.frames_per_phase
        if not 1 <= lo <= hi:
            raise ValueError(f"frames_per_phase must satisfy 1 <= lo <= hi, got {self.frames_per_phase}")
        if not 0.0 <= self.label_noise < 1.0:
            raise ValueError(f"label_noise must be in [0, 1), got {self.label_noise}")
        if self.position_jitter < 0 or self.gaze_jitter_deg < 0 or self.feature_noise < 0:
            raise ValueError("noise levels must be non-negative")
        if self.raw_dim != 8:
            raise ValueError(f"the surrogate feature layout is 8-d, got raw_dim={self.raw_dim}")


@dataclass
class AgentSim:
    id: int
    position: np.ndarray
    gaze_dir: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    attention_target: int | None = None


def atomic_phase_schedule(event: EventLabel, rng: np.random.Generator, config: GeneratorConfig = GeneratorConfig()) -> PhasePlan:
    lo, hi = config.frames_per_phase
    phases = tuple(Phase((label, label), int(rng.integers(lo, hi + 1))) for label in GRAMMAR[EventLabel(event)])
    return PhasePlan(EventLabel(event), phases)


def episode_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.hypot(v[0], v[1])
    return v / n if n > 0 else np.array([1.0, 0.0])


def _rotate(v: np.ndarray, deg: float) -> np.ndarray:
    t = math.radians(deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _angle(u: np.ndarray, v: np.ndarray) -> float:
    return math.degrees(math.acos(float(np.clip(np.dot(_unit(u), _unit(v)), -1.0, 1.0))))


def _bbox(center: np.ndarray, size: tuple[float, float]) -> tuple[float, float, float, float]:
    w, h = size
    x = float(np.clip(center[0] - w / 2, 0.0, 1.0 - w))
    y = float(np.clip(center[1] - h / 2, 0.0, 1.0 - h))
    return (x, y, w, h)


def _behaviour(label: AtomicLabel, role: int, progress: float) -> str:
    """Where an agent looks: 'partner', 'object', 'away' or 'free'."""
    if label == A.single:
        return "free"
    if label == A.mutual:
        return "partner"
    if label == A.avert:
        return "away"
    if label == A.share:
        return "object"
    if label == A.refer:
        return "object" if role == 0 else "partner"
    if label == A.follow:
        if role == 0:
            return "object"
        return "partner" if progress < 0.5 else "object"
    raise ValueError(label)


def _corrupt(label: AtomicLabel, rate: float, rng: np.random.Generator) -> AtomicLabel:
    if rate > 0 and rng.random() < rate:
        others = [l for l in AtomicLabel if l != label]
        return others[int(rng.integers(len(others)))]
    return label


def sample_episode(event: EventLabel, config: GeneratorConfig = GeneratorConfig(), seed: int = 0, episode_id: str | None = None) -> Episode:
    config.validate()
    rng = np.random.default_rng(seed)
    # label noise draws from its own stream so the geometry does not depend on the noise rate
    label_rng = np.random.default_rng([seed, 1])
    event = EventLabel(event)
    plan = atomic_phase_schedule(event, rng, config)
    n_agents = int(config.agents[int(rng.integers(len(config.agents)))])

    left = np.array([rng.uniform(0.12, 0.35), rng.uniform(0.3, 0.6)])
    right = np.array([rng.uniform(0.65, 0.88), rng.uniform(0.3, 0.6)])
    if rng.random() < 0.5:
        left, right = right, left
    homes = [left, right]
    if n_agents == 3:
        homes.append(np.array([rng.uniform(0.4, 0.6), rng.uniform(0.08, 0.22)]))
    object_home = np.array([rng.uniform(0.3, 0.7), rng.uniform(0.75, 0.9)])

    agents = [AgentSim(i + 1, h) for i, h in enumerate(homes)]
    object_id = n_agents + 1
    # per-episode fixed "free" gaze sides keep single gaze from drifting onto the object
    free_offsets = [rng.uniform(50.0, 130.0) for _ in agents]
    away_offsets = [rng.uniform(-45.0, 45.0) for _ in agents]

    frames = []
    frame_idx = 0
    for phase in plan.phases:
        for k in range(phase.duration):
            progress = k / phase.duration
            jitter = lambda: rng.normal(0.0, config.position_jitter, size=2)
            centers = [np.clip(a.position + jitter(), 0.05, 0.95) for a in agents]
            obj_center = np.clip(object_home + jitter(), 0.05, 0.95)
            entities = [Entity(0, "scene", (0.0, 0.0, 1.0, 1.0), None, tuple(_scene_feature(obj_center, rng, config)))]
            atomic = {}
            for i, agent in enumerate(agents):
                if i < 2:
                    label = phase.labels[i]
                    partner = 1 - i
                else:
                    label = A.single
                    partner = 0
                to_partner = centers[partner] - centers[i]
                to_object = obj_center - centers[i]
                mode = _behaviour(label, i, progress)
                if mode == "partner":
                    offset, target = to_partner, agents[partner].id
                elif mode == "object":
                    offset, target = to_object, object_id
                elif mode == "away":
                    offset = _rotate(-_unit(to_partner), away_offsets[i]) * rng.uniform(0.2, 0.4)
                    target = None
                else:
                    cands = [_rotate(_unit(to_partner), s * free_offsets[i]) for s in (1.0, -1.0)]
                    direction = max(cands, key=lambda d: _angle(d, to_object))
                    offset, target = direction * rng.uniform(0.2, 0.4), None
                gaze = _rotate(_unit(offset), rng.normal(0.0, config.gaze_jitter_deg))
                agent.gaze_dir, agent.attention_target = gaze, target
                measured = offset + rng.normal(0.0, config.position_jitter, size=2)
                raw = [gaze[0], gaze[1], measured[0], measured[1], *rng.normal(0.0, config.feature_noise, size=4)]
                entities.append(Entity(agent.id, "human", _bbox(centers[i], FACE_SIZE), target, tuple(float(v) for v in raw)))
                atomic[agent.id] = _corrupt(label, config.label_noise, label_rng)
            obj_raw = [0.0, 0.0, float(obj_center[0]), float(obj_center[1]), *rng.normal(0.0, config.feature_noise, size=4)]
            entities.append(Entity(object_id, "object", _bbox(obj_center, OBJECT_SIZE), None, tuple(float(v) for v in obj_raw)))
            frames.append(build_graph(entities, atomic=atomic, frame_idx=frame_idx))
            frame_idx += 1
    return Episode(episode_id if episode_id is not None else f"ep{seed}", frames, event)


def _scene_feature(obj_center: np.ndarray, rng: np.random.Generator, config: GeneratorConfig) -> list[float]:
    w, h = OBJECT_SIZE
    return [float(obj_center[0]), float(obj_center[1]), w, h, *(float(v) for v in rng.normal(0.0, config.feature_noise, size=4))]


def draw_events(n: int, mix: str, rng: np.random.Generator) -> list[EventLabel]:
    if mix == "uniform":
        p = np.full(len(EventLabel), 1.0 / len(EventLabel))
    elif mix == "paper":
        p = np.array([REFERENCE_EVENT_MIX[e] for e in EventLabel])
        p = p / p.sum()
    else:
        raise ValueError(f"unknown event mix {mix!r}")
    return [EventLabel(int(i)) for i in rng.choice(len(EventLabel), size=n, p=p)]


def generate_dataset(n_events: int, mix: str = "paper", config: GeneratorConfig = GeneratorConfig()) -> list[Episode]:
    """``n_events`` episodes; each one is a pure function of (event, config, derived seed)."""
    if n_events < 0:
        raise ValueError("n_events must be non-negative")
    config.validate()
    events = draw_events(n_events, mix, np.random.default_rng(config.seed))
    return [
        sample_episode(ev, config, episode_seed(config.seed, i), episode_id=f"ep{i:05d}")
        for i, ev in enumerate(events)
    ]


def grammar_oracle(labels: list[list[AtomicLabel]]) -> EventLabel:
    """Rule-based event recovery from clean atomic labels (presence/absence tests)."""
    present = {l for seq in labels for l in seq}
    if A.refer in present:
        return E.JointAttention
    if A.follow in present or A.share in present:
        return E.GazeFollowing
    if A.avert in present:
        return E.GazeAversion
    if A.mutual in present:
        return E.MutualGaze
    return E.NonCommunicative


def make_splits(episodes: list[Episode], ratios=(0.6, 0.2, 0.2), seed: int = 0) -> tuple[list[Episode], ...]:
    """Disjoint splits stratified by event, with exact overall sizes."""
    ratios = tuple(float(r) for r in ratios)
    if any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"split ratios must be non-negative and sum to 1, got {ratios}")
    n = len(episodes)
    targets = _largest_remainder(n, ratios)
    by_class: dict[int, list[int]] = {}
    for i, ep in enumerate(episodes):
        by_class.setdefault(int(ep.event), []).append(i)

    alloc: dict[int, list[int]] = {}
    for c, idx in sorted(by_class.items()):
        exact = [len(idx) * r for r in ratios]
        alloc[c] = [math.floor(x) for x in exact]
    need = [t - sum(alloc[c][s] for c in alloc) for s, t in enumerate(targets)]
    for c, idx in sorted(by_class.items()):
        extra = len(idx) - sum(alloc[c])
        exact = [len(idx) * r for r in ratios]
        order = sorted(range(len(ratios)), key=lambda s: (-need[s], -(exact[s] - alloc[c][s]), s))
        for s in order[:extra]:
            alloc[c][s] += 1
            need[s] -= 1

    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    for c, idx in sorted(by_class.items()):
        shuffled = [idx[j] for j in rng.permutation(len(idx))]
        start = 0
        for s, count in enumerate(alloc[c]):
            for i in shuffled[start : start + count]:
                assignment[i] = s
            start += count
    return tuple([ep for i, ep in enumerate(episodes) if assignment[i] == s] for s in range(len(ratios)))


def _largest_remainder(n: int, ratios: tuple[float, ...]) -> list[int]:
    exact = [n * r for r in ratios]
    counts = [math.floor(x + 1e-9) for x in exact]
    order = sorted(range(len(ratios)), key=lambda s: (-(exact[s] - counts[s]), s))
    for s in order[: n - sum(counts)]:
        counts[s] += 1
    return counts
