"""One-vs-rest confusion counts, per-class and macro measures, calibration bins."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import ClassProbabilities
from .errors import DimensionMismatch, LabelOutOfRange

MEASURES = ("accuracy", "sensitivity", "specificity", "ppv")


@dataclass(frozen=True)
class ConfusionCounts:
    """``table[y - 1]`` holds ``(tp, tn, fp, fn)`` for class ``y``."""

    table: np.ndarray

    @property
    def k(self):
        return self.table.shape[0]

    @property
    def tp(self):
        return self.table[:, 0]

    @property
    def tn(self):
        return self.table[:, 1]

    @property
    def fp(self):
        return self.table[:, 2]

    @property
    def fn(self):
        return self.table[:, 3]

    @property
    def n(self):
        return int(self.table[0].sum()) if self.k else 0


@dataclass(frozen=True)
class ClassMetrics:
    """Per-class measures (``k`` values each) and their macro means.

    Undefined cells (0/0) are NaN and are left out of the macro mean;
    ``undefined[m]`` counts them for measure ``m``.
    """

    per_class: dict
    macro: dict
    undefined: dict


def _check_labels(labels, k, what):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 1 or labels.max() > k):
        raise LabelOutOfRange(f"{what} labels outside 1..{k}")
    return labels.astype(np.int64)


def confusion_counts(pred, true, k) -> ConfusionCounts:
    pred = _check_labels(pred, k, "predicted")
    true = _check_labels(true, k, "true")
    if pred.shape != true.shape:
        raise DimensionMismatch(f"{pred.size} predictions for {true.size} true labels")
    table = _backend.confusion(np.ascontiguousarray(pred - 1), np.ascontiguousarray(true - 1), k)
    return ConfusionCounts(table)


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def measures_from_table(table):
    """Array of shape (4, k): accuracy, sensitivity, specificity, ppv."""
    tp, tn, fp, fn = (table[..., j] for j in range(4))
    return np.stack([
        _ratio(tp + tn, tp + tn + fp + fn),
        _ratio(tp, tp + fn),
        _ratio(tn, tn + fp),
        _ratio(tp, tp + fp),
    ])


def class_metrics(cc: ConfusionCounts) -> ClassMetrics:
    values = measures_from_table(cc.table)
    per_class, macro, undefined = {}, {}, {}
    for name, row in zip(MEASURES, values):
        per_class[name] = row
        defined = ~np.isnan(row)
        macro[name] = float(row[defined].mean()) if defined.any() else float("nan")
        undefined[name] = int((~defined).sum())
    return ClassMetrics(per_class, macro, undefined)


def calibration_bins(probs: ClassProbabilities, labels, y: int, n_bins: int = 20):
    """Equal-count bins of rows ordered by predicted probability of class ``y``.

    Tied probabilities always share a bin, so a bin can exceed its nominal
    size and the number of bins can fall below ``n_bins``. Returns an array
    with columns (mean predicted, observed fraction of ``y``, count).
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    values = probs.values if isinstance(probs, ClassProbabilities) else np.asarray(probs)
    p = values[:, y - 1]
    hit = (np.asarray(labels) == y).astype(float)
    n = p.size
    if n == 0:
        return np.empty((0, 3))
    order = np.argsort(p, kind="stable")
    ps, hs = p[order], hit[order]
    nominal = (np.arange(n) * n_bins) // n
    # Each tie group inherits the bin of its first member.
    first = np.searchsorted(ps, ps, side="left")
    bins = nominal[first]
    rows = []
    for b in np.unique(bins):
        sel = bins == b
        rows.append((ps[sel].mean(), hs[sel].mean(), sel.sum()))
    return np.array(rows, dtype=float)
