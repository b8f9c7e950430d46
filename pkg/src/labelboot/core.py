"""Domain types, dataset I/O and seeded random streams.

Class labels are 1-based at every public boundary (arrays handed to or
returned from public functions, CSV and JSON files) and 0-based inside
numerical kernels.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, ParseError, RowSumError, ValidationError

CONTINUOUS, BINARY, COUNT = "continuous", "binary", "count"
COLUMN_KINDS = (CONTINUOUS, BINARY, COUNT)

ROW_SUM_TOL = 1e-9


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabelSpace:
    k: int
    names: tuple = ()

    def __post_init__(self):
        if self.k < 2:
            raise ValidationError(f"label space needs k >= 2, got {self.k}")
        names = tuple(self.names) or tuple(str(i) for i in range(1, self.k + 1))
        if len(names) != self.k:
            raise ValidationError(f"{len(names)} names for {self.k} classes")
        object.__setattr__(self, "names", names)

    @property
    def labels(self):
        return np.arange(1, self.k + 1)

    def to_dict(self):
        return {"k": self.k, "names": list(self.names)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["k"]), tuple(d["names"]))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """An n x p covariate matrix with per-column names and kinds."""

    values: np.ndarray
    names: tuple = ()
    kinds: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1) if v.size else v.reshape(0, 0)
        if v.ndim != 2:
            raise DimensionMismatch(f"feature matrix must be 2-D, got shape {v.shape}")
        object.__setattr__(self, "values", _frozen(v))
        p = v.shape[1]
        names = tuple(self.names) or tuple(f"x{j}" for j in range(1, p + 1))
        kinds = tuple(self.kinds) or tuple(_infer_kind(v[:, j]) for j in range(p))
        if len(names) != p or len(kinds) != p:
            raise DimensionMismatch(f"{p} columns but {len(names)} names / {len(kinds)} kinds")
        bad = [k for k in kinds if k not in COLUMN_KINDS]
        if bad:
            raise ValidationError(f"unknown column kinds {bad}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "kinds", kinds)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def select(self, columns):
        """Column subset by name or by 0-based position."""
        idx = [self.names.index(c) if isinstance(c, str) else int(c) for c in columns]
        return FeatureMatrix(
            self.values[:, idx],
            tuple(self.names[j] for j in idx),
            tuple(self.kinds[j] for j in idx),
        )

    def take(self, rows):
        return FeatureMatrix(self.values[np.asarray(rows)], self.names, self.kinds)

    def violations(self):
        out = []
        v = self.values
        if not np.all(np.isfinite(v)):
            rows = np.unique(np.nonzero(~np.isfinite(v))[0])
            out.append(f"non-finite feature values in rows {rows[:10].tolist()}")
        for j, kind in enumerate(self.kinds):
            col = v[:, j]
            if kind == BINARY and not np.all(np.isin(col, (0.0, 1.0))):
                out.append(f"binary column {self.names[j]} has values outside {{0,1}}")
            elif kind == COUNT:
                ok = np.isfinite(col)
                if np.any(col[ok] < 0) or np.any(col[ok] != np.round(col[ok])):
                    out.append(f"count column {self.names[j]} has non-count values")
        return out

    def __eq__(self, other):
        return (
            isinstance(other, FeatureMatrix)
            and self.names == other.names
            and self.kinds == other.kinds
            and np.array_equal(self.values, other.values)
        )

    def to_dict(self):
        return {"names": list(self.names), "kinds": list(self.kinds), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        values = np.array(d["values"], dtype=float).reshape(-1, len(d["names"]))
        return cls(values, tuple(d["names"]), tuple(d["kinds"]))


def _infer_kind(col):
    finite = col[np.isfinite(col)]
    if finite.size and np.all(np.isin(finite, (0.0, 1.0))):
        return BINARY
    if finite.size and np.all(finite >= 0) and np.all(finite == np.round(finite)):
        return COUNT
    return CONTINUOUS


@dataclass(frozen=True, eq=False)
class SurvivalData:
    """Right-censored follow-up: ``event`` is True for an observed death."""

    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float).ravel()
        e = np.asarray(self.event).ravel()
        if e.dtype != bool:
            if not np.all(np.isin(e, (0, 1))):
                raise ValidationError("event indicator must be boolean or 0/1")
            e = e.astype(bool)
        if t.shape != e.shape:
            raise DimensionMismatch(f"{t.size} times but {e.size} event flags")
        object.__setattr__(self, "time", _frozen(t))
        object.__setattr__(self, "event", _frozen(e))

    def __len__(self):
        return self.time.size

    def take(self, rows):
        rows = np.asarray(rows)
        return SurvivalData(self.time[rows], self.event[rows])

    def violations(self):
        out = []
        if not np.all(np.isfinite(self.time)):
            out.append("non-finite survival times")
        elif np.any(self.time < 0):
            out.append(f"negative survival times in rows {np.nonzero(self.time < 0)[0][:10].tolist()}")
        return out

    def __eq__(self, other):
        return (
            isinstance(other, SurvivalData)
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.event, other.event)
        )

    def to_dict(self):
        return {"time": self.time.tolist(), "event": self.event.astype(int).tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["time"], dtype=float), np.array(d["event"], dtype=bool))


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: FeatureMatrix
    labels: np.ndarray
    survival: Optional[SurvivalData] = None

    def __post_init__(self):
        object.__setattr__(self, "labels", _frozen(np.asarray(self.labels).ravel()))

    @property
    def n(self):
        return self.features.n

    def take(self, rows):
        rows = np.asarray(rows)
        surv = self.survival.take(rows) if self.survival is not None else None
        return LabeledDataset(self.features.take(rows), self.labels[rows], surv)

    def with_features(self, features):
        return LabeledDataset(features, self.labels, self.survival)

    def class_counts(self, k):
        return np.bincount(self.labels.astype(int) - 1, minlength=k)[:k]

    def __eq__(self, other):
        return (
            isinstance(other, LabeledDataset)
            and self.features == other.features
            and np.array_equal(self.labels, other.labels)
            and self.survival == other.survival
        )

    def to_dict(self):
        return {
            "features": self.features.to_dict(),
            "labels": self.labels.tolist(),
            "survival": self.survival.to_dict() if self.survival is not None else None,
        }

    @classmethod
    def from_dict(cls, d):
        surv = SurvivalData.from_dict(d["survival"]) if d.get("survival") else None
        return cls(FeatureMatrix.from_dict(d["features"]), np.array(d["labels"], dtype=int), surv)


@dataclass(frozen=True, eq=False)
class ClassProbabilities:
    """Row-stochastic n x K matrix of estimated class probabilities."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] < 2:
            raise DimensionMismatch(f"probabilities must be n x K with K >= 2, got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
            bad = np.nonzero(~(np.isfinite(v) & (v >= 0) & (v <= 1)).all(axis=1))[0]
            raise ValidationError(f"probabilities outside [0, 1] in rows {bad[:10].tolist()}")
        sums = v.sum(axis=1)
        off = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
        if off.size:
            raise RowSumError(int(off[0]), float(sums[off[0]]))
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def k(self):
        return self.values.shape[1]

    def take(self, rows):
        return ClassProbabilities(self.values[np.asarray(rows)])

    def own_class(self, labels):
        """Probability each row assigns to its given (1-based) label."""
        labels = np.asarray(labels, dtype=int)
        return self.values[np.arange(self.n), labels - 1]

    def __eq__(self, other):
        return isinstance(other, ClassProbabilities) and np.array_equal(self.values, other.values)

    def to_dict(self):
        return {"values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["values"], dtype=float))


@dataclass(frozen=True, eq=False)
class LabelSets:
    """Per-row label sets stored as bitmasks; bit ``y - 1`` marks label ``y``.

    A zero mask is the null set, kept as-is rather than filled in.
    """

    masks: np.ndarray
    k: int

    def __post_init__(self):
        m = np.asarray(self.masks, dtype=np.int64).ravel()
        if np.any(m < 0) or np.any(m >= (1 << self.k)):
            raise ValidationError(f"label-set masks out of range for k={self.k}")
        object.__setattr__(self, "masks", _frozen(m))

    @classmethod
    def from_bool(cls, member):
        member = np.asarray(member, dtype=bool)
        weights = 1 << np.arange(member.shape[1], dtype=np.int64)
        return cls(member.astype(np.int64) @ weights, member.shape[1])

    @classmethod
    def from_lists(cls, sets, k):
        masks = [sum(1 << (y - 1) for y in s) for s in sets]
        return cls(np.array(masks, dtype=np.int64), k)

    @classmethod
    def singletons(cls, labels, k):
        return cls(np.left_shift(1, np.asarray(labels, dtype=np.int64) - 1), k)

    def __len__(self):
        return self.masks.size

    def as_bool(self):
        return ((self.masks[:, None] >> np.arange(self.k)) & 1).astype(bool)

    def contains(self, labels):
        labels = np.asarray(labels, dtype=np.int64)
        return ((self.masks >> (labels - 1)) & 1).astype(bool)

    def cardinality(self):
        return self.as_bool().sum(axis=1)

    def to_lists(self):
        member = self.as_bool()
        return [tuple(int(y) + 1 for y in np.nonzero(row)[0]) for row in member]

    def take(self, rows):
        return LabelSets(self.masks[np.asarray(rows)], self.k)

    def __eq__(self, other):
        return isinstance(other, LabelSets) and self.k == other.k and np.array_equal(self.masks, other.masks)

    def to_dict(self):
        return {"k": self.k, "sets": [list(s) for s in self.to_lists()]}

    @classmethod
    def from_dict(cls, d):
        return cls.from_lists(d["sets"], int(d["k"]))


@dataclass(frozen=True)
class RngSpec:
    """Names one reproducible random stream.

    Streams are addressed by ``(master_seed, path + (stream_id,))`` through
    numpy's ``SeedSequence`` spawn keys, so child streams never overlap and
    never depend on the order in which they are created.
    """

    master_seed: int
    stream_id: int = 0
    path: tuple = field(default=())

    def generator(self):
        seq = np.random.SeedSequence(self.master_seed, spawn_key=tuple(self.path) + (self.stream_id,))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, stream_id):
        return RngSpec(self.master_seed, int(stream_id), tuple(self.path) + (self.stream_id,))

    def to_dict(self):
        return {"master_seed": self.master_seed, "stream_id": self.stream_id, "path": list(self.path)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["master_seed"]), int(d.get("stream_id", 0)), tuple(d.get("path", ())))


def validate_dataset(ds: LabeledDataset, space: LabelSpace) -> list:
    """Return a list of invariant violations; an empty list means valid."""
    out = list(ds.features.violations())
    labels = np.asarray(ds.labels)
    if labels.size != ds.features.n:
        out.append(f"{labels.size} labels for {ds.features.n} feature rows")
    elif labels.size:
        numeric = np.issubdtype(labels.dtype, np.number)
        bad = np.arange(labels.size) if not numeric else np.nonzero(
            (labels < 1) | (labels > space.k) | (labels != np.round(labels))
        )[0]
        for i in bad[:20]:
            out.append(f"row {int(i)}: label {labels[i].item()!r} outside 1..{space.k}")
        if bad.size > 20:
            out.append(f"... {bad.size - 20} more out-of-range labels")
    if ds.survival is not None:
        out.extend(ds.survival.violations())
        if len(ds.survival) != ds.features.n:
            out.append(f"{len(ds.survival)} survival rows for {ds.features.n} feature rows")
    return out


def read_dataset_csv(path, kinds: Optional[Sequence[str]] = None) -> LabeledDataset:
    """Read the CSV dataset format: ``x1..xp, label[, time, event]``."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
    except (OSError, StopIteration) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    header = [h.strip() for h in header]
    if "label" not in header:
        raise ParseError(f"{path}: missing 'label' column")
    xcols = [j for j, h in enumerate(header) if h not in ("label", "time", "event")]
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if data.size == 0:
        data = data.reshape(0, len(header))
    if data.shape[1] != len(header):
        raise ParseError(f"{path}: ragged rows")
    lab = data[:, header.index("label")]
    if np.any(lab != np.round(lab)):
        raise ParseError(f"{path}: non-integer labels")
    survival = None
    if "time" in header and "event" in header:
        survival = SurvivalData(data[:, header.index("time")], data[:, header.index("event")].astype(int))
    fm = FeatureMatrix(data[:, xcols], tuple(header[j] for j in xcols), tuple(kinds or ()))
    return LabeledDataset(fm, lab.astype(int), survival)


def write_dataset_csv(ds: LabeledDataset, path) -> None:
    header = list(ds.features.names) + ["label"]
    if ds.survival is not None:
        header += ["time", "event"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            row = [repr(float(x)) for x in ds.features.values[i]] + [int(ds.labels[i])]
            if ds.survival is not None:
                row += [repr(float(ds.survival.time[i])), int(ds.survival.event[i])]
            w.writerow(row)
