import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazecomm.graph import (
    ATOMIC_NAMES,
    EDGE_DIM,
    EVENT_NAMES,
    NODE_DIM,
    SCENE_POSITION,
    AnnotationError,
    AtomicLabel,
    Entity,
    Episode,
    EventLabel,
    GraphError,
    build_graph,
    init_edge_feature,
    init_node_feature,
    read_annotations,
    validate,
    write_annotations,
)

import oracles
from conftest import make_entities


def test_init_node_feature_layout(rng):
    raw, pos = rng.normal(size=8), rng.normal(size=6)
    W, b = rng.normal(size=(6, 8)), rng.normal(size=6)
    x = init_node_feature(raw, pos, W, b).value
    assert x.shape == (NODE_DIM,)
    np.testing.assert_allclose(x[:6], oracles.affine_scalar(W.tolist(), raw.tolist(), b.tolist()), rtol=1e-12)
    np.testing.assert_array_equal(x[6:], pos)


def test_init_node_feature_zero_compressor_keeps_position(rng):
    pos = rng.normal(size=6)
    x = init_node_feature(rng.normal(size=8), pos, np.zeros((6, 8)), np.zeros(6)).value
    np.testing.assert_array_equal(x, np.concatenate([np.zeros(6), pos]))


def test_init_node_feature_width_mismatch():
    with pytest.raises(ValueError, match="width"):
        init_node_feature(np.zeros(7), np.zeros(6), np.zeros((6, 8)), np.zeros(6))


def test_init_edge_feature(rng):
    a, b = rng.normal(size=12), rng.normal(size=12)
    e = init_edge_feature(a, b).value
    assert e.shape == (EDGE_DIM,)
    assert not np.any(init_edge_feature(np.zeros(12), np.zeros(12)).value)
    swapped = init_edge_feature(b, a).value
    np.testing.assert_array_equal(swapped[:12], e[12:])
    np.testing.assert_array_equal(swapped[12:], e[:12])


def test_build_graph_structure():
    g = build_graph(make_entities(3))
    assert g.node_kinds == ("scene", "human", "human", "human")
    assert g.node_ids == (0, 1, 2, 3)
    assert set(g.edge_features) == {(v, w) for v in range(4) for w in range(4) if v != w}
    assert g.node_features.shape == (4, NODE_DIM)
    assert all(f.shape == (EDGE_DIM,) for f in g.edge_features.values())
    np.testing.assert_array_equal(g.position[0], SCENE_POSITION)
    assert validate(g) == []


def test_build_graph_mutual_pair():
    g = build_graph(make_entities(2, {1: 2, 2: 1}))
    A = g.gt_adjacency
    assert A[1, 2] == 1 and A[2, 1] == 1
    assert A.sum() == 2


def test_build_graph_object_attention_goes_to_scene_row():
    g = build_graph(make_entities(1, {1: 2}))  # entity 2 is the object
    assert np.count_nonzero(g.gt_adjacency) == 1
    assert g.gt_adjacency[0, 1] == 1
    assert not np.any(g.gt_adjacency[:, 0])


def test_build_graph_position_uses_gaze_from_raw():
    ents = make_entities(1)
    g = build_graph(ents)
    h = ents[1]
    np.testing.assert_allclose(g.position[1, 4:], h.raw_feature[:2])
    np.testing.assert_allclose(g.position[1, :2], h.center)


@pytest.mark.parametrize(
    "mutate,match",
    [
        (lambda e: e[1:], "scene"),
        (lambda e: [e[0], e[-1]], "no human"),
        (lambda e: e + [Entity(1, "human", (0, 0, 0.1, 0.1), None, (0.0,) * 8)], "duplicate"),
        (lambda e: [e[0], Entity(1, "human", (0, 0, 0.1, 0.1), 42, (0.0,) * 8)], "unknown entity"),
        (lambda e: [e[0], Entity(1, "human", (0, 0, 0.1, 0.1), 1, (0.0,) * 8)], "itself"),
    ],
)
def test_build_graph_errors(mutate, match):
    with pytest.raises(GraphError, match=match):
        build_graph(mutate(make_entities(2)))


def test_build_graph_missing_atomic_label():
    with pytest.raises(GraphError, match="no atomic label"):
        build_graph(make_entities(2), atomic={1: AtomicLabel.single})


def test_validate_flags_scene_column():
    g = build_graph(make_entities(3))
    g.gt_adjacency[2, 0] = 1
    problems = validate(g)
    assert len(problems) == 1 and "scene column" in problems[0]


def test_validate_flags_missing_edge():
    g = build_graph(make_entities(3))
    del g.edge_features[(1, 2)]
    problems = validate(g)
    assert len(problems) == 1 and "missing edge" in problems[0]


def test_label_maps_total_and_stable():
    assert ATOMIC_NAMES == ["single", "mutual", "avert", "refer", "follow", "share"]
    assert EVENT_NAMES == ["NonCommunicative", "MutualGaze", "GazeAversion", "GazeFollowing", "JointAttention"]
    assert [int(l) for l in AtomicLabel] == list(range(6))
    assert [int(l) for l in EventLabel] == list(range(5))


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 5),
    targets=st.lists(st.one_of(st.none(), st.integers(0, 7)), min_size=5, max_size=5),
    seed=st.integers(0, 1000),
)
def test_gt_adjacency_matches_brute_force(n, targets, seed):
    attention = {}
    for i in range(1, n + 1):
        t = targets[i - 1]
        # valid targets: scene 0, another human, the object n+1
        if t is not None and t <= n + 1 and t != i:
            attention[i] = t
    ents = make_entities(n, attention, seed=seed)
    g = build_graph(ents)
    np.testing.assert_array_equal(g.gt_adjacency, oracles.brute_adjacency(ents))
    assert validate(g) == []


# --- annotation files ----------------------------------------------------------


def test_annotation_round_trip_bit_exact(small_dataset, tmp_path):
    path = tmp_path / "a.jsonl"
    write_annotations(small_dataset, path)
    back = read_annotations(path)
    assert back == small_dataset
    for a, b in zip(back, small_dataset):
        for ga, gb in zip(a.frames, b.frames):
            assert ga.raw.tobytes() == gb.raw.tobytes()
            assert ga.gt_adjacency.tobytes() == gb.gt_adjacency.tobytes()
    path2 = tmp_path / "b.jsonl"
    write_annotations(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_empty_annotation_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert read_annotations(path) == []


def test_truncated_line_reports_line_number(small_dataset, tmp_path):
    path = tmp_path / "a.jsonl"
    write_annotations(small_dataset[:2], path)
    lines = path.read_text().splitlines()
    lines[3] = lines[3][: len(lines[3]) // 2]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(AnnotationError, match=r"a\.jsonl:4:"):
        read_annotations(path)


def test_unknown_field_rejected(small_dataset, tmp_path):
    rec = small_dataset[0].to_records()[0]
    rec["extra"] = 1
    path = tmp_path / "x.jsonl"
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(AnnotationError, match="unknown fields"):
        read_annotations(path)
    rec = small_dataset[0].to_records()[0]
    rec["entities"][0]["color"] = "red"
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(AnnotationError, match="entity 0: unknown fields"):
        read_annotations(path)


def test_missing_field_and_bad_label_rejected(small_dataset, tmp_path):
    path = tmp_path / "x.jsonl"
    rec = small_dataset[0].to_records()[0]
    del rec["event"]
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(AnnotationError, match="missing fields"):
        read_annotations(path)
    rec = small_dataset[0].to_records()[0]
    rec["event"] = "Dancing"
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(AnnotationError, match="unknown label"):
        read_annotations(path)


def test_non_contiguous_video_rejected(small_dataset, tmp_path):
    a, b = small_dataset[0].to_records(), small_dataset[1].to_records()
    path = tmp_path / "x.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in a[:1] + b[:1] + a[1:2]))
    with pytest.raises(AnnotationError, match=":3: .*not contiguous"):
        read_annotations(path)


def test_episode_requires_stable_humans():
    g1 = build_graph(make_entities(2))
    g2 = build_graph(make_entities(3), frame_idx=1)
    with pytest.raises(GraphError, match="human set"):
        Episode("e", [g1, g2], EventLabel.MutualGaze)
