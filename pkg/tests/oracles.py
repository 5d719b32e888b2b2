"""Independent reference computations used by the tests.

Nothing here touches the tape; everything is plain Python / numpy so that it
cannot share a bug with the code under test.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from gazecomm.nn import tape as T

FD_STEP = 1e-5
FD_RTOL = 1e-3
# below this magnitude both gradients are treated as zero
FD_FLOOR = 1e-7


def sigmoid(v: float) -> float:
    return 1.0 / (1.0 + math.exp(-v)) if v >= 0 else math.exp(v) / (1.0 + math.exp(v))


def affine_scalar(W, x, b) -> list[float]:
    return [sum(W[i][j] * x[j] for j in range(len(x))) + b[i] for i in range(len(b))]


def gru_scalar(x, h, Wz, bz, Wr, br, Wh, bh) -> list[float]:
    xh = list(x) + list(h)
    z = [sigmoid(v) for v in affine_scalar(Wz, xh, bz)]
    r = [sigmoid(v) for v in affine_scalar(Wr, xh, br)]
    xrh = list(x) + [r[i] * h[i] for i in range(len(h))]
    ht = [math.tanh(v) for v in affine_scalar(Wh, xrh, bh)]
    return [(1 - z[i]) * h[i] + z[i] * ht[i] for i in range(len(h))]


def lstm_scalar(x, h, c, Wi, bi, Wf, bf, Wo, bo, Wg, bg):
    xh = list(x) + list(h)
    i = [sigmoid(v) for v in affine_scalar(Wi, xh, bi)]
    f = [sigmoid(v) for v in affine_scalar(Wf, xh, bf)]
    o = [sigmoid(v) for v in affine_scalar(Wo, xh, bo)]
    g = [math.tanh(v) for v in affine_scalar(Wg, xh, bg)]
    c2 = [f[k] * c[k] + i[k] * g[k] for k in range(len(c))]
    return [o[k] * math.tanh(c2[k]) for k in range(len(c))], c2


def cross_entropy_scalar(logits, target) -> float:
    exps = [math.exp(v) for v in logits]
    return -math.log(exps[target] / sum(exps))


def bce_scalar(p, t, eps=1e-7) -> float:
    p = min(max(p, eps), 1 - eps)
    return -(t * math.log(p) + (1 - t) * math.log(1 - p))


def finite_difference(loss_fn, arrays: list[np.ndarray], coords=None, step=FD_STEP):
    """Central differences of ``loss_fn()`` w.r.t. entries of ``arrays`` (mutated in place, restored)."""
    out = []
    for k, arr in enumerate(arrays):
        idxs = coords[k] if coords is not None else list(np.ndindex(arr.shape))
        grads = {}
        for idx in idxs:
            old = arr[idx]
            arr[idx] = old + step
            up = loss_fn()
            arr[idx] = old - step
            down = loss_fn()
            arr[idx] = old
            grads[idx] = (up - down) / (2 * step)
        out.append(grads)
    return out


def max_rel_error(analytic: np.ndarray, numeric: dict) -> float:
    worst = 0.0
    for idx, n in numeric.items():
        a = float(analytic[idx])
        denom = max(abs(a), abs(n))
        if denom < FD_FLOOR:
            continue
        worst = max(worst, abs(a - n) / denom)
    return worst


def check_param_grads(build_loss, params, rng=None, per_param: int | None = None) -> float:
    """Backprop ``build_loss(tape)`` and compare every (or a sample of) parameter entries to central differences."""
    for p in params:
        p.zero_grad()
    tape = T.Tape()
    T.backward(build_loss(tape))
    analytic = [p.grad.copy() for p in params]

    def loss_value():
        return float(build_loss(T.Tape()).value)

    worst = 0.0
    for p, a in zip(params, analytic):
        idxs = list(np.ndindex(p.value.shape))
        if per_param is not None and len(idxs) > per_param:
            pick = rng.choice(len(idxs), size=per_param, replace=False)
            idxs = [idxs[i] for i in pick]
        # tape.watch reads p.value, so perturb that array directly
        (numeric,) = finite_difference(loss_value, [p.value], [idxs])
        worst = max(worst, max_rel_error(a, numeric))
        p.zero_grad()
    return worst


def brute_transitions(streams) -> np.ndarray:
    pairs = Counter()
    for seq in streams:
        for a, b in zip(seq, seq[1:]):
            if a != b:
                pairs[(int(a), int(b))] += 1
    cells = [(a, b) for a in range(6) for b in range(6) if a != b]
    counts = np.array([pairs[c] for c in cells], dtype=np.float64)
    return counts / counts.sum() if counts.sum() else counts


def brute_frequency(streams) -> np.ndarray:
    c = Counter(int(l) for seq in streams for l in seq)
    total = sum(c.values())
    return np.array([c[k] / total for k in range(6)])


def brute_metrics(gt, pred, k):
    """Per-class precision/recall/F1 and accuracy by explicit counting."""
    precision, recall, f1 = [], [], []
    for c in range(k):
        tp = sum(1 for g, p in zip(gt, pred) if g == c and p == c)
        pp = sum(1 for p in pred if p == c)
        ap = sum(1 for g in gt if g == c)
        pc = tp / pp if pp else 0.0
        rc = tp / ap if ap else 0.0
        precision.append(pc)
        recall.append(rc)
        f1.append(2 * pc * rc / (pc + rc) if pc + rc else 0.0)
    acc = sum(1 for g, p in zip(gt, pred) if g == p) / len(gt)
    return precision, recall, f1, acc


def brute_adjacency(entities) -> np.ndarray:
    """Rebuild ground-truth connectivity from attention fields, node 0 = scene."""
    scene = [e for e in entities if e.kind == "scene"][0]
    humans = [e for e in entities if e.kind == "human"]
    order = [scene.id] + [h.id for h in humans]
    kinds = {e.id: e.kind for e in entities}
    n = len(order)
    A = np.zeros((n, n))
    for h in humans:
        v = order.index(h.id)
        if h.attention is not None and kinds[h.attention] == "human":
            A[v, order.index(h.attention)] = 1
        else:
            A[0, v] = 1
    return A


def event_grammar_rules(labels) -> int:
    """Presence/absence rules for clean streams (event index)."""
    present = {int(l) for seq in labels for l in seq}
    single, mutual, avert, refer, follow, share = range(6)
    if refer in present:
        return 4
    if follow in present or share in present:
        return 3 if mutual not in present else 4
    if avert in present:
        return 2
    if mutual in present:
        return 1
    return 0


_DOT_ID = r'(?:[A-Za-z_][A-Za-z_0-9]*|-?(?:\.[0-9]+|[0-9]+(?:\.[0-9]*)?)|"(?:[^"\\]|\\.)*")'
_DOT_ATTR = rf"{_DOT_ID}\s*=\s*{_DOT_ID}"
_DOT_ATTRS = rf"(?:\[\s*(?:{_DOT_ATTR}(?:\s*[,;]?\s*{_DOT_ATTR})*)?\s*\])?"


def check_dot(text: str) -> list[str]:
    """A small validator for the subset of the DOT language we emit: a single
    ``digraph`` with node and ``->`` edge statements. Returns parse problems."""
    import re

    problems = []
    lines = [l.strip() for l in text.strip().splitlines()]
    if not re.fullmatch(rf"(?:strict\s+)?digraph\s+{_DOT_ID}?\s*\{{", lines[0]):
        problems.append(f"bad header: {lines[0]!r}")
    if lines[-1] != "}":
        problems.append("missing closing brace")
    node = re.compile(rf"{_DOT_ID}\s*{_DOT_ATTRS}\s*;?")
    edge = re.compile(rf"{_DOT_ID}\s*->\s*{_DOT_ID}\s*{_DOT_ATTRS}\s*;?")
    declared, used = set(), set()
    for l in lines[1:-1]:
        if not l:
            continue
        if edge.fullmatch(l):
            a, b = (s.strip() for s in l.split("[")[0].rstrip(";").split("->"))
            used.update([a, b])
        elif node.fullmatch(l):
            declared.add(l.split("[")[0].strip().rstrip(";"))
        else:
            problems.append(f"unparseable statement: {l!r}")
    if text.count("{") != text.count("}"):
        problems.append("unbalanced braces")
    if used - declared:
        problems.append(f"edges reference undeclared nodes {sorted(used - declared)}")
    return problems
