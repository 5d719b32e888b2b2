"""Message passing over one frame's social graph.

Every iteration recomputes the edge states from the current node states and
the static edge features, reads a connectivity weight off each edge, and then
updates every node with a GRU whose input is the connectivity-weighted sum of
its *incoming* edge states. Entry ``A[w, v]`` weights the edge ``w -> v``; the
scene column is forced to zero so nothing flows into the scene node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import EDGE_DIM, NODE_DIM, edge_feature_tensor
from .nn import tape as T
from .nn.layers import Dense, GRUCell
from .nn.params import ParameterStore

MODES = ("explicit", "implicit")


def adjacency_mask(n: int) -> np.ndarray:
    """1 where a connectivity weight may be non-zero: off-diagonal, not the scene column."""
    mask = np.ones((n, n))
    np.fill_diagonal(mask, 0.0)
    mask[:, 0] = 0.0
    return mask


@dataclass
class PassState:
    node_states: list[np.ndarray] = field(default_factory=list)
    edge_states: list[np.ndarray] = field(default_factory=list)
    adjacency: list[np.ndarray] = field(default_factory=list)


class SpatialReasoner:
    def __init__(self, store: ParameterStore, iterations: int = 2, mode: str = "explicit", prefix: str = "spatial"):
        if iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {iterations}")
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.iterations = iterations
        self.mode = mode
        self.f_E = Dense(store, f"{prefix}.f_E", 2 * NODE_DIM + EDGE_DIM, EDGE_DIM, "relu")
        self.f_A = Dense(store, f"{prefix}.f_A", EDGE_DIM, 1)
        self.f_V = GRUCell(store, f"{prefix}.f_V", EDGE_DIM + NODE_DIM, NODE_DIM)

    def edge_update(self, tape: T.Tape, y_v, y_w, x_vw) -> T.Var:
        """New edge state from both endpoint states and the static edge feature."""
        for what, arr, width in (("y_v", y_v, NODE_DIM), ("y_w", y_w, NODE_DIM), ("x_vw", x_vw, EDGE_DIM)):
            if arr.shape[-1] != width:
                raise ValueError(f"{what} width {arr.shape[-1]} != {width}")
        return self.f_E(tape, T.concat([y_v, y_w, x_vw]))

    def structure_update(self, tape: T.Tape, edge_states) -> T.Var:
        """Connectivity matrix from an ``(n, n, E)`` edge-state tensor."""
        n = edge_states.shape[0]
        logits = self.f_A(tape, edge_states)
        return T.sigmoid(T.take(logits, (Ellipsis, 0))) * adjacency_mask(n)

    def node_update(self, tape: T.Tape, A, edge_states, x, y_prev) -> T.Var:
        # column v of A weights the edges entering v; sorted summation keeps the
        # result independent of neighbour order
        weighted = T.take(A, (Ellipsis, None)) * edge_states
        messages = T.sorted_sum(weighted, axis=0)
        return self.f_V(tape, T.concat([messages, x]), y_prev)

    def propagate(self, tape: T.Tape, x, trace: PassState | None = None) -> tuple[T.Var, list[T.Var]]:
        """Run all iterations on node features ``x`` of shape ``(n, V)``.

        Returns the final node states and the connectivity matrix of every iteration.
        """
        n = x.shape[0]
        x_edges = edge_feature_tensor(x)
        y = x
        adjacencies = []
        for _ in range(self.iterations):
            y_src = T.broadcast_to(T.take(y, (slice(None), None)), (n, n, NODE_DIM))
            y_dst = T.broadcast_to(T.take(y, (None, slice(None))), (n, n, NODE_DIM))
            edges = self.edge_update(tape, y_src, y_dst, x_edges)
            A = self.structure_update(tape, edges)
            y = self.node_update(tape, A, edges, x, y)
            adjacencies.append(A)
            if trace is not None:
                trace.node_states.append(y.value.copy())
                trace.edge_states.append(edges.value.copy())
                trace.adjacency.append(A.value.copy())
        return y, adjacencies


def adjacency_loss(A, gt_adjacency: np.ndarray | None) -> T.Var:
    """Mean binary cross entropy over the unmasked entries of ``A``."""
    if gt_adjacency is None:
        raise ValueError("explicit adjacency learning needs gt_adjacency")
    n = A.shape[0]
    if gt_adjacency.shape != (n, n):
        raise ValueError(f"gt_adjacency shape {gt_adjacency.shape} != {(n, n)}")
    keep = adjacency_mask(n).astype(bool)
    return T.binary_cross_entropy(T.take(A, keep), gt_adjacency[keep])


def to_dot(
    node_ids,
    node_kinds,
    adjacency: np.ndarray,
    threshold: float = 0.5,
    name: str = "social_graph",
    max_penwidth: float = 5.0,
) -> str:
    """Render a connectivity matrix as a Graphviz digraph (edge ``w -> v`` for ``A[w, v] >= threshold``)."""
    lines = [f'digraph "{name}" {{']
    for nid, kind in zip(node_ids, node_kinds):
        shape = "box" if kind == "scene" else "ellipse"
        lines.append(f'  n{nid} [label="{kind} {nid}", shape={shape}];')
    n = len(node_ids)
    for w in range(n):
        for v in range(n):
            a = float(adjacency[w, v])
            if w != v and a >= threshold:
                lines.append(
                    f'  n{node_ids[w]} -> n{node_ids[v]} [label="{a:.2f}", penwidth={max_penwidth * a:.3f}];'
                )
    lines.append("}")
    return "\n".join(lines) + "\n"
