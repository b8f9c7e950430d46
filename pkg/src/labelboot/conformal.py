"""Split-conformal label sets with per-class error levels.

Each class ``y`` gets its own cutoff, calibrated only on calibration rows
whose true label is ``y``; an observation's label set holds every class
whose predicted probability reaches that class's cutoff.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassProbabilities, LabeledDataset, LabelSets, RngSpec
from .errors import ClassTooSmall, EmptyCalibrationClass, EmptyClass, ValidationError


@dataclass(frozen=True)
class SplitIndices:
    i1: np.ndarray
    i2: np.ndarray


@dataclass(frozen=True, eq=False)
class ThresholdVector:
    t: np.ndarray
    alpha: np.ndarray
    calib_counts: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        if np.any((t < 0) | (t > 1)):
            raise ValidationError("thresholds must lie in [0, 1]")
        if np.any((alpha <= 0) | (alpha >= 1)):
            raise ValidationError("error levels must lie in (0, 1)")
        for name, v in (("t", t), ("alpha", alpha), ("calib_counts", np.asarray(self.calib_counts, dtype=np.int64))):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def k(self):
        return self.t.size

    def __eq__(self, other):
        return (
            isinstance(other, ThresholdVector)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.calib_counts, other.calib_counts)
        )

    def to_dict(self):
        return {"t": self.t.tolist(), "alpha": self.alpha.tolist(), "calib_counts": self.calib_counts.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["t"]), np.array(d["alpha"]), np.array(d["calib_counts"]))


@dataclass(frozen=True)
class AmbiguityProfile:
    """Counts of label sets by cardinality ``0..K``.

    ``by_class[y - 1, c]`` counts rows with true label ``y`` whose set has
    ``c`` members.
    """

    overall: np.ndarray
    by_class: np.ndarray

    def shares(self):
        overall = self.overall / max(self.overall.sum(), 1)
        totals = self.by_class.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            by_class = self.by_class / totals
        return overall, by_class

    def to_dict(self):
        return {"overall": self.overall.tolist(), "by_class": self.by_class.tolist()}


def stratified_halves(labels, gen, k, extra_first=False):
    """Randomly halve each class; odd leftovers alternate between halves.

    Alternating the odd leftover keeps the two halves within one row of
    each other overall, not just per class.
    """
    labels = np.asarray(labels, dtype=np.int64)
    first, second = [], []
    give_first = extra_first
    for y in range(1, k + 1):
        rows = gen.permutation(np.nonzero(labels == y)[0])
        h = rows.size // 2
        if rows.size % 2:
            h += int(give_first)
            give_first = not give_first
        first.append(rows[:h])
        second.append(rows[h:])
    return np.sort(np.concatenate(first)).astype(np.int64), np.sort(np.concatenate(second)).astype(np.int64)


def split_development(ds: LabeledDataset, rng: RngSpec, k: int = 3) -> SplitIndices:
    """Stratified random halves of the development rows (fit / calibrate)."""
    counts = ds.class_counts(k)
    small = np.nonzero(counts < 2)[0]
    if small.size:
        raise ClassTooSmall(f"classes {(small + 1).tolist()} have fewer than 2 development rows")
    i1, i2 = stratified_halves(ds.labels, rng.generator(), k)
    return SplitIndices(i1, i2)


def threshold_for_class(scores, alpha):
    """Smallest score whose within-class rank count exceeds ``(m + 1) * alpha - 1``.

    The rank count of a score is the number of scores ``<=`` it, so tied
    scores share a count and the cutoff is always one of the scores.
    """
    s = np.sort(np.asarray(scores, dtype=float))
    m = s.size
    if m == 0:
        raise EmptyCalibrationClass("no calibration scores")
    bound = (m + 1) * alpha - 1
    counts = np.searchsorted(s, s, side="right")
    return float(s[np.argmax(counts > bound)])


def estimate_thresholds(probs_i2: ClassProbabilities, labels_i2, alpha) -> ThresholdVector:
    """Per-class conformal cutoffs from the calibration half."""
    labels_i2 = np.asarray(labels_i2, dtype=np.int64)
    k = probs_i2.k
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (k,)).copy()
    own = probs_i2.own_class(labels_i2)
    t = np.empty(k)
    counts = np.bincount(labels_i2 - 1, minlength=k)[:k]
    for y in range(1, k + 1):
        if counts[y - 1] == 0:
            raise EmptyCalibrationClass(f"class {y} absent from calibration half")
        t[y - 1] = threshold_for_class(own[labels_i2 == y], alpha[y - 1])
    return ThresholdVector(t, alpha, counts)


def build_label_sets(probs: ClassProbabilities, t: ThresholdVector) -> LabelSets:
    thresholds = t.t if isinstance(t, ThresholdVector) else np.asarray(t, dtype=float)
    return LabelSets.from_bool(probs.values >= thresholds[None, :])


def class_coverage(sets: LabelSets, labels, strict=True):
    """Fraction of true-class-``y`` rows whose set contains ``y``, per class.

    With ``strict=False`` an absent class yields NaN instead of raising.
    """
    labels = np.asarray(labels, dtype=np.int64)
    k = sets.k
    hit = sets.contains(labels)
    n_y = np.bincount(labels - 1, minlength=k)[:k]
    covered = np.bincount(labels - 1, weights=hit, minlength=k)[:k]
    if strict and np.any(n_y == 0):
        raise EmptyClass(f"classes {(np.nonzero(n_y == 0)[0] + 1).tolist()} have no rows")
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n_y > 0, covered / np.maximum(n_y, 1), np.nan)


def ambiguity_profile(sets: LabelSets, labels) -> AmbiguityProfile:
    labels = np.asarray(labels, dtype=np.int64)
    k = sets.k
    card = sets.cardinality()
    overall = np.bincount(card, minlength=k + 1)
    by_class = np.zeros((k, k + 1), dtype=np.int64)
    np.add.at(by_class, (labels - 1, card), 1)
    return AmbiguityProfile(overall.astype(np.int64), by_class)
