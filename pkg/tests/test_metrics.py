import numpy as np
import pytest
from hypothesis import given, strategies as st

from labelboot.core import ClassProbabilities
from labelboot.errors import DimensionMismatch, LabelOutOfRange
from labelboot.metrics import calibration_bins, class_metrics, confusion_counts, measures_from_table

from oracles import confusion_loop

labels = st.lists(st.tuples(st.integers(1, 4), st.integers(1, 4)), min_size=1, max_size=60)


@given(labels)
def test_confusion_matches_direct_count(pairs):
    pred, true = map(np.array, zip(*pairs))
    cc = confusion_counts(pred, true, 4)
    assert np.array_equal(cc.table, confusion_loop(pred, true, 4))
    assert np.all(cc.table.sum(axis=1) == len(pairs))


def test_worked_example():
    pred = np.array([1, 1, 2, 3, 3, 2])
    true = np.array([1, 2, 2, 3, 1, 3])
    cm = class_metrics(confusion_counts(pred, true, 3))
    assert cm.per_class["sensitivity"].tolist() == [0.5, 0.5, 0.5]
    assert cm.per_class["ppv"].tolist() == [0.5, 0.5, 0.5]
    assert cm.per_class["specificity"].tolist() == [0.75, 0.75, 0.75]
    assert cm.per_class["accuracy"].tolist() == pytest.approx([4 / 6, 4 / 6, 4 / 6])
    assert cm.macro["sensitivity"] == pytest.approx(0.5)


def test_undefined_cells_skip_macro():
    # Class 3 never predicted and never true: sensitivity and ppv are 0/0.
    cm = class_metrics(confusion_counts([1, 2, 2], [1, 2, 1], 3))
    assert np.isnan(cm.per_class["sensitivity"][2])
    assert cm.undefined["sensitivity"] == 1
    assert cm.macro["sensitivity"] == pytest.approx((0.5 + 1.0) / 2)


def test_errors():
    with pytest.raises(LabelOutOfRange):
        confusion_counts([1, 4], [1, 2], 3)
    with pytest.raises(DimensionMismatch):
        confusion_counts([1, 2], [1], 3)


def test_measures_from_table_shape():
    t = np.array([[5, 10, 2, 3], [0, 20, 0, 0]])
    m = measures_from_table(t)
    assert m.shape == (4, 2)
    assert m[1, 0] == 5 / 8 and np.isnan(m[1, 1])


@given(st.integers(0, 10**6), st.integers(1, 25))
def test_calibration_bins_partition_rows(seed, n_bins):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(1, 200))
    p1 = gen.integers(0, 11, n) / 10  # exact ties on a grid
    split = gen.random(n)
    p = np.column_stack([p1, (1 - p1) * split, (1 - p1) * (1 - split)])
    y = gen.integers(1, 4, n)
    bins = calibration_bins(ClassProbabilities(p), y, 1, n_bins)
    assert bins[:, 2].sum() == n
    assert len(bins) <= n_bins
    assert np.all(np.diff(bins[:, 0]) > 0)  # tie groups never straddle bins
    assert np.average(bins[:, 1], weights=bins[:, 2]) == pytest.approx(np.mean(y == 1))


def test_calibration_bins_equal_counts():
    p = np.column_stack([np.linspace(0, 1, 100), 1 - np.linspace(0, 1, 100)])
    bins = calibration_bins(ClassProbabilities(p), np.ones(100, int), 1, 10)
    assert bins[:, 2].tolist() == [10] * 10
