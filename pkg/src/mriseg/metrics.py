"""Overlap metrics between a predicted and a ground-truth segmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import LabelMap


class MetricError(ValueError):
    pass


def _pair(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise MetricError(f"mask shapes differ: {a.shape} vs {b.shape}")
    if a.dtype != bool:
        if not np.all((a == 0) | (a == 1)):
            raise MetricError("predicted mask is not binary")
        a = a.astype(bool)
    if b.dtype != bool:
        if not np.all((b == 0) | (b == 1)):
            raise MetricError("truth mask is not binary")
        b = b.astype(bool)
    return a, b


def jaccard(pred, truth) -> float:
    a, b = _pair(pred, truth)
    union = np.count_nonzero(a | b)
    if union == 0:
        raise MetricError("Jaccard score undefined: both masks are empty")
    return np.count_nonzero(a & b) / union


def dice(pred, truth) -> float:
    a, b = _pair(pred, truth)
    total = np.count_nonzero(a) + np.count_nonzero(b)
    if total == 0:
        raise MetricError("Dice coefficient undefined: both masks are empty")
    return 2 * np.count_nonzero(a & b) / total


def seg_accuracy(pred, truth) -> float:
    """Fraction of pixels on which the two masks agree."""
    a, b = _pair(pred, truth)
    if a.size == 0:
        raise MetricError("empty image")
    return np.count_nonzero(a == b) / a.size


@dataclass
class Scores:
    js: float
    dsc: float
    sa: float

    def percent(self):
        return round(100 * self.js, 2), round(100 * self.dsc, 2), round(100 * self.sa, 2)


def scores(pred, truth) -> Scores:
    return Scores(jaccard(pred, truth), dice(pred, truth), seg_accuracy(pred, truth))


@dataclass
class ClassReport:
    per_class: dict[int, Scores]
    mapping: dict[int, int]

    @property
    def mean(self) -> Scores:
        vals = list(self.per_class.values())
        return Scores(*(float(np.mean([getattr(s, f) for s in vals])) for f in ("js", "dsc", "sa")))


def _labels(x):
    return x.labels if isinstance(x, LabelMap) else np.asarray(x)


def multi_class_report(pred, truth, matching: str = "identity") -> ClassReport:
    """One-vs-rest scores per truth class.

    With ``matching="best"`` predicted labels are relabelled to maximize
    the summed Dice score over classes (Hungarian assignment).
    """
    p, t = _labels(pred), _labels(truth)
    if p.shape != t.shape:
        raise MetricError(f"label map shapes differ: {p.shape} vs {t.shape}")
    t_ids = np.unique(t)
    p_ids = np.unique(p)
    if matching == "identity":
        mapping = {int(i): int(i) for i in p_ids}
    elif matching == "best":
        if len(p_ids) > len(t_ids):
            raise MetricError(f"{len(p_ids)} predicted labels cannot be matched to {len(t_ids)} truth labels")
        gain = np.array([[dice(p == i, t == j) for j in t_ids] for i in p_ids])
        rows, cols = linear_sum_assignment(-gain)
        mapping = {int(p_ids[r]): int(t_ids[c]) for r, c in zip(rows, cols)}
    else:
        raise MetricError(f"unknown matching {matching!r}")
    relabelled = np.full(p.shape, -1, dtype=np.int64)
    for src, dst in mapping.items():
        relabelled[p == src] = dst
    per_class = {}
    for j in t_ids:
        a, b = relabelled == j, t == j
        per_class[int(j)] = Scores(jaccard(a, b), dice(a, b), seg_accuracy(a, b))
    return ClassReport(per_class, mapping)
