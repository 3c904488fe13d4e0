"""Error, accuracy and F1 metrics over 4-class people counts."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Sequence

import numpy as np

N_CLASSES = 4
MINORITY = (1, 2, 3)


class ConfusionMatrix4:
    """4x4 count matrix, ``counts[true, pred]``."""

    def __init__(self, counts):
        c = np.array(counts, dtype=np.int64)
        if c.shape != (N_CLASSES, N_CLASSES):
            raise ValueError(f"confusion matrix must be 4x4, got {c.shape}")
        if (c < 0).any():
            raise ValueError("confusion counts must be non-negative")
        c.flags.writeable = False
        self.counts = c

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix4) and bool(np.array_equal(self.counts, other.counts))

    def __repr__(self):
        return f"ConfusionMatrix4({self.counts.tolist()})"

    def to_list(self) -> list:
        return self.counts.tolist()

    def format(self) -> str:
        width = max(5, max(len(str(v)) for v in self.counts.ravel()) + 1)
        lines = ["true\\pred" + "".join(f"{j:>{width}}" for j in range(N_CLASSES))]
        for i, row in enumerate(self.counts):
            lines.append(f"{i:>9}" + "".join(f"{v:>{width}}" for v in row))
        return "\n".join(lines)


def round_and_clamp(pred: float, two_stage: bool = False) -> int:
    """Round half up to an integer class and clamp into 0..3.

    ``two_stage`` first rounds to one decimal (as printed), then to an
    integer, so 1.45 -> 1.5 -> 2.
    """
    if not math.isfinite(pred):
        raise ValueError(f"cannot round non-finite prediction {pred!r}")
    if two_stage:
        d = Decimal(repr(float(pred))).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    else:
        d = Decimal(float(pred))
    k = int(d.quantize(Decimal("1"), rounding=ROUND_HALF_UP))
    return min(max(k, 0), N_CLASSES - 1)


def confusion(preds: Sequence[int], labels: Sequence[int]) -> ConfusionMatrix4:
    p = np.asarray(preds, dtype=np.int64)
    t = np.asarray(labels, dtype=np.int64)
    if p.shape != t.shape or p.size == 0:
        raise ValueError("preds and labels must be non-empty and equally long")
    if p.min() < 0 or p.max() >= N_CLASSES or t.min() < 0 or t.max() >= N_CLASSES:
        raise ValueError("classes must lie in 0..3")
    c = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(c, (t, p), 1)
    return ConfusionMatrix4(c)


def _require_total(cm: ConfusionMatrix4) -> int:
    n = cm.total
    if n <= 0:
        raise ValueError("confusion matrix is empty")
    return n


def accuracy_exact(cm: ConfusionMatrix4) -> Fraction:
    return Fraction(int(np.trace(cm.counts)), _require_total(cm))


def binary_collapse_exact(cm: ConfusionMatrix4) -> Fraction:
    c = cm.counts
    return Fraction(int(c[0, 0]) + int(c[1:, 1:].sum()), _require_total(cm))


def accuracy(cm: ConfusionMatrix4) -> float:
    return float(accuracy_exact(cm))


def binary_collapse(cm: ConfusionMatrix4) -> float:
    """Presence accuracy: class 0 versus any of 1..3."""
    return float(binary_collapse_exact(cm))


def mae(preds, labels) -> float:
    d = np.asarray(preds, dtype=np.float64) - np.asarray(labels, dtype=np.float64)
    return float(np.mean(np.abs(d)))


def rmse(preds, labels) -> float:
    d = np.asarray(preds, dtype=np.float64) - np.asarray(labels, dtype=np.float64)
    return float(math.sqrt(np.mean(d * d)))


def _div(a, b) -> float:
    return float(a) / float(b) if b else 0.0


def f1_family(cm: ConfusionMatrix4) -> dict:
    c = cm.counts
    precision, recall, f1 = [], [], []
    for k in range(N_CLASSES):
        tp = int(c[k, k])
        p = _div(tp, c[:, k].sum())
        r = _div(tp, c[k, :].sum())
        precision.append(p)
        recall.append(r)
        f1.append(_div(2 * p * r, p + r))
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "f1_macro": sum(f1) / N_CLASSES,
        "f1_minority": sum(f1[k] for k in MINORITY) / len(MINORITY),
        "recall_minority": sum(recall[k] for k in MINORITY) / len(MINORITY),
    }


@dataclass(frozen=True)
class CompositeWeights:
    w_acc: float = 0.25
    w_f1macro: float = 0.20
    w_f1min: float = 0.30
    w_recmin: float = 0.15
    w_nonzero: float = 0.10

    def __post_init__(self):
        if abs(sum(asdict(self).values()) - 1.0) > 1e-12:
            raise ValueError("composite weights must sum to 1")


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    mae: float
    accuracy: float
    f1_macro: float
    f1_minority: float
    recall_minority: float
    r_nonzero: float
    composite: float
    confusion: ConfusionMatrix4

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in
             ("rmse", "mae", "accuracy", "f1_macro", "f1_minority", "recall_minority", "r_nonzero", "composite")}
        d["confusion"] = self.confusion.to_list()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def composite_from_parts(acc, f1_macro, f1_minority, recall_minority, r_nonzero,
                         weights: CompositeWeights = CompositeWeights()) -> float:
    return (weights.w_acc * acc + weights.w_f1macro * f1_macro + weights.w_f1min * f1_minority
            + weights.w_recmin * recall_minority + weights.w_nonzero * r_nonzero)


def composite_score(report: EvalReport, weights: CompositeWeights = CompositeWeights()) -> float:
    return composite_from_parts(report.accuracy, report.f1_macro, report.f1_minority,
                                report.recall_minority, report.r_nonzero, weights)


def report_from_confusion(cm: ConfusionMatrix4, rmse_value: float = float("nan"),
                          mae_value: float = float("nan"),
                          weights: CompositeWeights = CompositeWeights()) -> EvalReport:
    fam = f1_family(cm)
    acc = accuracy(cm)
    rn = binary_collapse(cm)
    comp = composite_from_parts(acc, fam["f1_macro"], fam["f1_minority"], fam["recall_minority"], rn, weights)
    return EvalReport(rmse_value, mae_value, acc, fam["f1_macro"], fam["f1_minority"],
                      fam["recall_minority"], rn, comp, cm)


def evaluate(preds, labels, weights: CompositeWeights = CompositeWeights(),
             two_stage: bool = False) -> EvalReport:
    """Score continuous (or integer) predictions against integer labels.

    MAE/RMSE use the raw predictions; class metrics use round_and_clamp.
    """
    raw = np.asarray(preds, dtype=np.float64)
    classes = [round_and_clamp(v, two_stage=two_stage) for v in raw]
    cm = confusion(classes, labels)
    return report_from_confusion(cm, rmse(raw, labels), mae(raw, labels), weights)

