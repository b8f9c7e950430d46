import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from labelboot.core import SurvivalData
from labelboot.errors import DimensionMismatch, EmptyData, TooFewSamples
from labelboot.survival import (
    kaplan_meier,
    median_survival,
    repetition_interval,
    stratified_estimates,
    survival_at,
    survival_bias,
)

from oracles import km_rational, km_rational_at, km_rational_median


def check_against_oracle(times, events):
    curve = kaplan_meier(SurvivalData(np.array(times, float), np.array(events, bool)))
    ref = km_rational(times, events)
    assert curve.times.tolist() == [r[0] for r in ref]
    assert curve.at_risk.tolist() == [r[2] for r in ref]
    assert curve.events.tolist() == [r[3] for r in ref]
    for s, r in zip(curve.survival, ref):
        assert abs(Fraction(float(s)) - r[1]) <= Fraction(1, 10**15)
    med = km_rational_median(ref)
    assert (np.isnan(median_survival(curve)) and med is None) or median_survival(curve) == med
    for t in sorted(set(times)) + [0.5, max(times) + 1]:
        want = km_rational_at(ref, t, max(times))
        got = survival_at(curve, t)
        assert (want is None and np.isnan(got)) or abs(Fraction(got) - want) <= Fraction(1, 10**15)


@pytest.mark.parametrize("n", range(1, 6))
def test_km_all_patterns_small(n):
    for times in itertools.product((1, 2, 3), repeat=n):
        for events in itertools.product((0, 1), repeat=n):
            check_against_oracle(times, events)


@given(st.lists(st.tuples(st.integers(1, 6), st.booleans()), min_size=1, max_size=8))
def test_km_random_patterns(rows):
    times, events = zip(*rows)
    check_against_oracle(times, events)


@given(st.lists(st.integers(1, 20), min_size=1, max_size=40))
def test_no_censoring_is_empirical_survivor(times):
    t = np.array(times, float)
    curve = kaplan_meier(SurvivalData(t, np.ones(t.size, bool)))
    for et, s in zip(curve.times, curve.survival):
        assert s == (t > et).sum() / t.size


def test_worked_example():
    # times 1,2+,3,3,4+ : S(1)=4/5, S(3)=4/5 * 1/3
    curve = kaplan_meier(SurvivalData([1, 2, 3, 3, 4], [1, 0, 1, 1, 0]))
    assert curve.times.tolist() == [1, 3]
    assert curve.survival == pytest.approx([0.8, 0.8 / 3])
    assert median_survival(curve) == 3
    assert survival_at(curve, 4) == pytest.approx(0.8 / 3)
    assert np.isnan(survival_at(curve, 4.5))


def test_survival_past_follow_up():
    c = kaplan_meier(SurvivalData([1, 2], [1, 1]))
    assert survival_at(c, 10) == 0.0
    c = kaplan_meier(SurvivalData([1, 2], [1, 0]))
    assert np.isnan(survival_at(c, 10))
    assert np.isnan(median_survival(kaplan_meier(SurvivalData([1, 2, 3], [1, 0, 0]))))


def test_exact_half_reaches_median():
    # S drops to exactly 1/2 after a censoring: 1+, then 2 of 4 die... S = 3/4 * 2/3 = 1/2
    c = kaplan_meier(SurvivalData([1, 2, 3, 4, 5], [0, 1, 1, 0, 0]))
    assert median_survival(c) == 3


def test_empty_raises():
    with pytest.raises(EmptyData):
        kaplan_meier(SurvivalData([], []))


def test_stratified_matches_per_stratum_curves(gen):
    n = 300
    t = np.round(gen.exponential(80, n))
    e = gen.random(n) < 0.7
    y = gen.integers(1, 4, n)
    y[y == 3] = 2  # class 3 empty
    est = stratified_estimates(SurvivalData(t, e), y, 3, horizons=(30, 90))
    assert est.empty == (3,)
    assert np.all(np.isnan(est.values[2]))
    for cls in (1, 2):
        c = kaplan_meier(SurvivalData(t[y == cls], e[y == cls]))
        want = [survival_at(c, 30), survival_at(c, 90), median_survival(c)]
        assert np.allclose(est.values[cls - 1], want, equal_nan=True, rtol=0, atol=1e-15)
    assert est.columns == ("surv30", "surv90", "median")
    with pytest.raises(DimensionMismatch):
        stratified_estimates(SurvivalData(t, e), y[:-1])


def test_bias_and_interval():
    b = survival_bias(np.array([[1.0, 2.0]]), np.array([[0.5, 3.0]]))
    assert b.values.tolist() == [[0.5, -1.0]]
    ri = repetition_interval([1.0, 2.0, 3.0, np.nan])
    assert ri.n == 3 and ri.mean == 2.0 and ri.sd == 1.0
    assert (ri.lo, ri.hi) == (2.0 - 0.95, 2.0 + 0.95)
    assert (ri.lo_196, ri.hi_196) == (2.0 - 1.96, 2.0 + 1.96)
    with pytest.raises(TooFewSamples):
        repetition_interval([1.0])
