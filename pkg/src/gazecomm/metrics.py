"""Per-class precision / F1, top-k accuracy, confusion matrices, chance baseline.

Zero denominators (a class never predicted, or never present) score 0.
Averaged accuracy is micro-averaged over all evaluated items.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .temporal import topk_indices


def confusion_matrix(gt, pred, k: int) -> np.ndarray:
    """Rows are ground truth, columns are predictions."""
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.asarray(gt, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den != 0)
    return out


def precision_per_class(cm: np.ndarray) -> np.ndarray:
    return _safe_div(np.diag(cm), cm.sum(axis=0))


def recall_per_class(cm: np.ndarray) -> np.ndarray:
    return _safe_div(np.diag(cm), cm.sum(axis=1))


def f1_per_class(cm: np.ndarray) -> np.ndarray:
    p, r = precision_per_class(cm), recall_per_class(cm)
    return _safe_div(2 * p * r, p + r)


def topk_accuracy(probs, gt, k: int) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.int64)
    if not 1 <= k <= probs.shape[-1]:
        raise ValueError(f"k must be in [1, {probs.shape[-1]}], got {k}")
    if len(gt) == 0:
        return 0.0
    top = topk_indices(probs, k)
    return float(np.mean(np.any(top == gt[:, None], axis=1)))


@dataclass
class MetricsReport:
    class_names: list[str]
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    top1: float
    top2: float
    confusion: np.ndarray

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "classes": list(self.class_names),
            "precision": dict(zip(self.class_names, self.precision.tolist())),
            "recall": dict(zip(self.class_names, self.recall.tolist())),
            "f1": dict(zip(self.class_names, self.f1.tolist())),
            "top1": self.top1,
            "top2": self.top2,
            "n": self.n,
            "confusion": self.confusion.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self, row_name: str = "model") -> str:
        """Percentages with two decimals: P and F per class, then top-1 and top-2."""
        head = ["Task"]
        for name in self.class_names:
            head += [f"{name} P", f"{name} F"]
        head += ["top-1", "top-2"]
        row = [row_name]
        for p, f in zip(self.precision, self.f1):
            row += [f"{100 * p:.2f}", f"{100 * f:.2f}"]
        row += [f"{100 * self.top1:.2f}", f"{100 * self.top2:.2f}"]
        widths = [max(len(a), len(b)) for a, b in zip(head, row)]
        fmt = lambda cells: " | ".join(c.rjust(w) for c, w in zip(cells, widths))
        return "\n".join([fmt(head), "-+-".join("-" * w for w in widths), fmt(row)]) + "\n"


def build_report(probs, gt, class_names: list[str]) -> MetricsReport:
    probs = np.asarray(probs, dtype=np.float64).reshape(-1, len(class_names))
    gt = np.asarray(gt, dtype=np.int64)
    k = len(class_names)
    pred = np.argmax(probs, axis=1) if len(gt) else np.zeros(0, dtype=np.int64)
    cm = confusion_matrix(gt, pred, k)
    report = MetricsReport(
        class_names=list(class_names),
        precision=precision_per_class(cm),
        recall=recall_per_class(cm),
        f1=f1_per_class(cm),
        top1=topk_accuracy(probs, gt, 1),
        top2=topk_accuracy(probs, gt, min(2, k)),
        confusion=cm,
    )
    if len(gt):
        support = cm.sum(axis=1)
        identity = float((report.recall * support).sum() / len(gt))
        assert abs(identity - report.top1) < 1e-12, (identity, report.top1)
    return report


def chance_baseline(n_classes: int, gt, seed: int, class_names: list[str] | None = None) -> MetricsReport:
    """Score a seeded predictor that ranks classes uniformly at random."""
    gt = np.asarray(gt, dtype=np.int64)
    rng = np.random.default_rng(seed)
    scores = rng.random((len(gt), n_classes))
    probs = scores / scores.sum(axis=1, keepdims=True)
    names = class_names or [str(i) for i in range(n_classes)]
    return build_report(probs, gt, names)
