"""Kaplan-Meier estimation, stratified summaries and bias against observed strata."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from ._kernels_py import MEDIAN_TOL, product_limit
from .core import SurvivalData
from .errors import DimensionMismatch, EmptyData, TooFewSamples

DEFAULT_HORIZONS = (90.0, 365.0)
PAPER_RULE_MULTIPLIER = 0.95
NORMAL_MULTIPLIER = 1.96


@dataclass(frozen=True)
class KMCurve:
    """Right-continuous product-limit step function.

    ``times`` are the distinct event times; ``survival[j]`` is the estimate
    just after ``times[j]``. ``last_time`` is the largest follow-up time
    (event or censored) in the data.
    """

    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    last_time: float


def kaplan_meier(sd: SurvivalData) -> KMCurve:
    """Product-limit estimate.

    Rows censored at an event time are still at risk at that time.
    """
    if len(sd) == 0:
        raise EmptyData("Kaplan-Meier needs at least one observation")
    t, e = sd.time, sd.event
    uniq, inverse = np.unique(t, return_inverse=True)
    deaths = np.bincount(inverse, weights=e, minlength=uniq.size).astype(np.int64)
    leaving = np.bincount(inverse, minlength=uniq.size)
    at_risk = t.size - np.concatenate([[0], np.cumsum(leaving)[:-1]])
    ev = deaths > 0
    surv = product_limit(deaths, leaving, at_risk)[ev]
    return KMCurve(uniq[ev], surv, at_risk[ev].astype(np.int64), deaths[ev], float(t.max()))


def survival_at(curve: KMCurve, t: float) -> float:
    """S(t), or NaN past the last follow-up while the risk set is unresolved."""
    pos = np.searchsorted(curve.times, t, side="right")
    value = 1.0 if pos == 0 else float(curve.survival[pos - 1])
    if t > curve.last_time and value > 0.0:
        return float("nan")
    return value


def median_survival(curve: KMCurve) -> float:
    """First event time with S <= 0.5; NaN when the curve never gets there.

    The comparison allows ``MEDIAN_TOL`` so a value that is exactly one
    half in exact arithmetic is not lost to rounding.
    """
    below = np.nonzero(curve.survival <= 0.5 + MEDIAN_TOL)[0]
    return float(curve.times[below[0]]) if below.size else float("nan")


@dataclass(frozen=True)
class StratifiedEstimates:
    """``values[y - 1]`` = (S(h) for each horizon..., median) for stratum ``y``.

    NaN marks an empty stratum or an undefined estimate; ``empty`` lists
    the classes without any rows.
    """

    values: np.ndarray
    horizons: tuple
    empty: tuple = ()

    @property
    def columns(self):
        return tuple(f"surv{int(h) if float(h).is_integer() else h}" for h in self.horizons) + ("median",)


def stratified_estimates(sd: SurvivalData, labels, k: int = 3, horizons=DEFAULT_HORIZONS) -> StratifiedEstimates:
    """Kaplan-Meier per class stratum, then horizon and median extraction."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size != len(sd):
        raise DimensionMismatch(f"{labels.size} labels for {len(sd)} survival rows")
    order = np.argsort(sd.time, kind="stable")
    values = km_summary(sd.time[order], sd.event[order], labels[order] - 1, k, horizons)
    counts = np.bincount(labels - 1, minlength=k)[:k]
    empty = tuple(int(y) + 1 for y in np.nonzero(counts == 0)[0])
    return StratifiedEstimates(values, tuple(float(h) for h in horizons), empty)


def km_summary(time_sorted, event_sorted, strata0, k, horizons=DEFAULT_HORIZONS):
    """Backend call on rows already sorted by time; ``strata0`` is 0-based."""
    return _backend.km_strata(
        np.ascontiguousarray(time_sorted, dtype=float),
        np.ascontiguousarray(event_sorted, dtype=np.uint8),
        np.ascontiguousarray(strata0, dtype=np.int64),
        int(k),
        np.ascontiguousarray(horizons, dtype=float),
    )


@dataclass(frozen=True)
class SurvivalBias:
    """Predicted-stratum estimate minus observed-stratum estimate."""

    values: np.ndarray
    columns: tuple


def survival_bias(pred_est, obs_est) -> SurvivalBias:
    pv = pred_est.values if isinstance(pred_est, StratifiedEstimates) else np.asarray(pred_est, dtype=float)
    ov = obs_est.values if isinstance(obs_est, StratifiedEstimates) else np.asarray(obs_est, dtype=float)
    if pv.shape != ov.shape:
        raise DimensionMismatch(f"estimate shapes differ: {pv.shape} vs {ov.shape}")
    columns = obs_est.columns if isinstance(obs_est, StratifiedEstimates) else ()
    return SurvivalBias(pv - ov, columns)


@dataclass(frozen=True)
class RepetitionInterval:
    """Across-repetition spread of one estimate.

    ``lo``/``hi`` use mean +/- 0.95 * sd exactly as the published rule is
    printed; ``lo_196``/``hi_196`` give the conventional 1.96 * sd band.
    """

    mean: float
    sd: float
    lo: float
    hi: float
    lo_196: float
    hi_196: float
    n: int
    rule: str = "paper-rule interval: mean +/- 0.95*sd"


def repetition_interval(estimates) -> RepetitionInterval:
    x = np.asarray(estimates, dtype=float)
    x = x[~np.isnan(x)]
    if x.size < 2:
        raise TooFewSamples(f"need >= 2 defined estimates, got {x.size}")
    mean = float(x.mean())
    sd = float(x.std(ddof=1))
    return RepetitionInterval(
        mean, sd,
        mean - PAPER_RULE_MULTIPLIER * sd, mean + PAPER_RULE_MULTIPLIER * sd,
        mean - NORMAL_MULTIPLIER * sd, mean + NORMAL_MULTIPLIER * sd,
        int(x.size),
    )
