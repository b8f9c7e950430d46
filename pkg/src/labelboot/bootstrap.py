"""Resampling engine with per-resample random streams and percentile summaries.

Resample ``b`` always draws from the stream ``rng.child(b)``, so results do
not depend on how resamples are scheduled across workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .conformal import build_label_sets
from .core import ClassProbabilities, LabeledDataset, LabelSets, RngSpec
from .errors import StatisticUndefined, TooFewSamples, ValidationError
from .labeling import LabelerKind, argmax_label
from .metrics import MEASURES
from . import _backend
from .survival import DEFAULT_HORIZONS

DEFAULT_N_BOOT = 500


def resample_indices(n, rng):
    gen = rng.generator() if isinstance(rng, RngSpec) else rng
    return gen.integers(0, n, size=n)


def percentile_interval(samples, level=0.95):
    """Empirical quantiles at ``(1 - level) / 2`` and ``1 - (1 - level) / 2``.

    Uses linear interpolation between order statistics at position
    ``(m - 1) * q`` (the "inclusive" rule, R type 7). NaN samples are
    dropped first.
    """
    x = np.asarray(samples, dtype=float)
    x = x[~np.isnan(x)]
    if x.size < 2:
        raise TooFewSamples(f"need >= 2 defined samples, got {x.size}")
    q = (1.0 - level) / 2.0
    lo, hi = np.quantile(x, [q, 1.0 - q], method="linear")
    return float(lo), float(hi)


@dataclass
class BootstrapSummary:
    """Summary of one (possibly vector-valued) statistic over resamples."""

    name: str
    columns: tuple
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    defined_count: np.ndarray
    n_boot: int
    level: float = 0.95
    samples: Optional[np.ndarray] = None

    def as_rows(self):
        for j, col in enumerate(self.columns):
            yield col, float(self.mean[j]), float(self.lo[j]), float(self.hi[j]), int(self.defined_count[j])


def summarize(name, columns, samples, level=0.95, keep=False):
    samples = np.asarray(samples, dtype=float).reshape(samples.shape[0], -1)
    m = samples.shape[1]
    mean, lo, hi = np.full(m, np.nan), np.full(m, np.nan), np.full(m, np.nan)
    defined = (~np.isnan(samples)).sum(axis=0)
    for j in range(m):
        col = samples[:, j]
        if defined[j]:
            mean[j] = col[~np.isnan(col)].mean()
        if defined[j] >= 2:
            lo[j], hi[j] = percentile_interval(col, level)
    return BootstrapSummary(name, tuple(columns), mean, lo, hi, defined, samples.shape[0], level,
                            samples if keep else None)


@dataclass
class Resample:
    """What a statistic sees for one resample.

    ``idx`` are rows of the validation data in draw order; ``pred`` and
    ``true`` are the matching 1-based labels.
    """

    idx: np.ndarray
    pred: np.ndarray
    true: np.ndarray
    k: int
    data: LabeledDataset


class Statistic:
    """Base class: ``columns`` names the output vector of ``__call__``."""

    name = "statistic"
    columns: tuple = ("value",)

    def __call__(self, rs: Resample) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


class FunctionStatistic(Statistic):
    """Wrap a plain callable returning a scalar or a fixed-length vector."""

    def __init__(self, fn, name="statistic", columns=("value",)):
        self.fn, self.name, self.columns = fn, name, tuple(columns)

    def __call__(self, rs):
        return np.atleast_1d(np.asarray(self.fn(rs), dtype=float))


class CoverageStatistic(Statistic):
    """Per-class coverage of fixed label sets on the resampled rows."""

    name = "coverage"

    def __init__(self, sets: LabelSets):
        self.k = sets.k
        self.member = sets.as_bool()
        self.columns = tuple(str(y) for y in range(1, sets.k + 1))

    def __call__(self, rs):
        true0 = rs.true - 1
        hit = self.member[rs.idx, true0]
        n_y = np.bincount(true0, minlength=self.k)
        covered = np.bincount(true0, weights=hit, minlength=self.k)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n_y > 0, covered / np.maximum(n_y, 1), np.nan)


class AmbiguityStatistic(Statistic):
    """Share of resampled rows by label-set cardinality."""

    name = "ambiguity"

    def __init__(self, sets: LabelSets):
        self.card = sets.cardinality()
        self.k = sets.k
        self.columns = tuple(f"card{c}" for c in range(sets.k + 1))

    def __call__(self, rs):
        return np.bincount(self.card[rs.idx], minlength=self.k + 1) / rs.idx.size


class ConfusionStatistic(Statistic):
    name = "confusion"

    def __init__(self, k):
        self.k = k
        self.columns = tuple(f"{c}[{y}]" for y in range(1, k + 1) for c in ("tp", "tn", "fp", "fn"))

    def __call__(self, rs):
        return _backend.confusion(rs.pred - 1, rs.true - 1, self.k).ravel().astype(float)


class MetricsStatistic(Statistic):
    """Accuracy, sensitivity, specificity, PPV per class plus macro means."""

    name = "metrics"

    def __init__(self, k):
        self.k = k
        self.columns = tuple(f"{m}[{c}]" for m in MEASURES for c in [*map(str, range(1, k + 1)), "macro"])

    def __call__(self, rs):
        return _backend.measures(_backend.confusion(rs.pred - 1, rs.true - 1, self.k)).ravel()


class SurvivalStatistic(Statistic):
    """Kaplan-Meier horizon survival and median per predicted-label stratum."""

    name = "survival"

    def __init__(self, data: LabeledDataset, k, horizons=DEFAULT_HORIZONS):
        if data.survival is None:
            raise ValidationError("survival statistic needs survival data")
        self.k = k
        self.horizons = np.asarray(horizons, dtype=float)
        surv = data.survival
        self.order = np.argsort(surv.time, kind="stable")
        self.rank = np.empty_like(self.order)
        self.rank[self.order] = np.arange(self.order.size)
        self.time_sorted = surv.time[self.order]
        self.event_sorted = surv.event[self.order].astype(np.uint8)
        names = [f"surv{int(h)}" for h in self.horizons] + ["median"]
        self.columns = tuple(f"{c}[{y}]" for y in range(1, k + 1) for c in names)

    def __call__(self, rs):
        return _backend.km_resample(self.rank[rs.idx], rs.pred - 1, self.time_sorted,
                                    self.event_sorted, self.k, self.horizons).ravel()


def _evaluate(stat, rs):
    try:
        return np.asarray(stat(rs), dtype=float)
    except StatisticUndefined:
        return np.full(len(stat.columns), np.nan)


def run_bootstrap(validation: LabeledDataset, probs: ClassProbabilities, labeler: LabelerKind,
                  stats: Sequence[Statistic], n_boot: int, rng: RngSpec, thresholds=None,
                  level: float = 0.95, workers: int = 1, keep_samples: bool = False):
    """Resample the validation rows ``n_boot`` times and summarize each statistic.

    For the weighted labeler every resampled row draws one label uniformly
    from its label set (all labels when the set is null); the naive labeler
    reuses the argmax label. A statistic may raise
    :class:`StatisticUndefined` or return NaN entries; those resamples are
    skipped for the affected entries only.
    """
    if n_boot < 2:
        raise ValidationError("n_boot must be >= 2")
    labeler = LabelerKind(labeler)
    k = probs.k
    n = validation.n
    true_all = np.asarray(validation.labels, dtype=np.int64)
    if labeler is LabelerKind.WEIGHTED_SET_SAMPLER:
        if thresholds is None:
            raise ValidationError("weighted labeling needs thresholds")
        masks = np.ascontiguousarray(build_label_sets(probs, thresholds).masks)
        fixed = None
    else:
        masks = None
        fixed = argmax_label(probs)

    out = [np.empty((n_boot, len(s.columns))) for s in stats]

    def one(b):
        gen = rng.child(b).generator()
        idx = gen.integers(0, n, size=n)
        if masks is not None:
            pred = _backend.sample_from_masks(masks[idx], gen.random(n), k) + 1
        else:
            pred = fixed[idx]
        rs = Resample(idx, pred, true_all[idx], k, validation)
        for j, s in enumerate(stats):
            out[j][b] = _evaluate(s, rs)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, range(n_boot)))
    else:
        for b in range(n_boot):
            one(b)
    return [summarize(s.name, s.columns, out[j], level, keep_samples) for j, s in enumerate(stats)]
