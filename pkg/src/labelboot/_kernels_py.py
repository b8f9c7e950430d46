"""Pure-Python/numpy twins of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def sample_from_masks(masks, u, k):
    masks = np.asarray(masks, dtype=np.int64)
    u = np.asarray(u, dtype=float)
    member = ((masks[:, None] >> np.arange(k)) & 1).astype(bool)
    card = member.sum(axis=1)
    empty = card == 0
    member[empty] = True
    card = np.where(empty, k, card)
    target = np.minimum((u * card).astype(np.int64), card - 1)
    # Position of the (target+1)-th set bit in each row.
    rank = np.cumsum(member, axis=1) - 1
    hit = member & (rank == target[:, None])
    return np.argmax(hit, axis=1).astype(np.int64)


def confusion(pred, true, k):
    pred = np.asarray(pred, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    n = pred.size
    correct = pred == true
    tp = np.bincount(pred[correct], minlength=k)
    fp = np.bincount(pred[~correct], minlength=k)
    fn = np.bincount(true[~correct], minlength=k)
    tn = n - tp - fp - fn
    return np.stack([tp, tn, fp, fn], axis=1).astype(np.int64)


def measures(table):
    table = np.asarray(table, dtype=np.int64)
    k = table.shape[0]
    tp, tn, fp, fn = (table[:, j].astype(float) for j in range(4))
    out = np.empty((4, k + 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        for m, (num, den) in enumerate(((tp + tn, tp + tn + fp + fn), (tp, tp + fn),
                                        (tn, tn + fp), (tp, tp + fp))):
            out[m, :k] = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    for m in range(4):
        # Sequential sum keeps the same rounding as the compiled loop.
        total, cnt = 0.0, 0
        for v in out[m, :k]:
            if not np.isnan(v):
                total += v
                cnt += 1
        out[m, k] = total / cnt if cnt else np.nan
    return out


def km_resample(ranks, strata, time_sorted, event_sorted, k, horizons):
    ranks = np.asarray(ranks, dtype=np.int64)
    perm = np.argsort(ranks, kind="stable")
    r = ranks[perm]
    return km_strata(np.asarray(time_sorted)[r], np.asarray(event_sorted)[r],
                     np.asarray(strata)[perm], k, horizons)


MEDIAN_TOL = 1e-12


def product_limit(deaths, leaving, at_risk):
    """Kaplan-Meier survival just after each distinct-time group.

    Within a run of groups free of censoring the product telescopes to
    ``(at risk - deaths) / (at risk at run start)``, so each value is one
    multiply and one divide from the run's base survival. With no censoring
    at all this is exactly the empirical survivor fraction.
    """
    m = deaths.size
    surv = np.empty(m)
    if m == 0:
        return surv
    cens = np.nonzero(leaving > deaths)[0]
    bounds = np.concatenate([[0], cens + 1, [m]])
    base, base_risk = 1.0, float(at_risk[0])
    for a, b in zip(bounds[:-1], bounds[1:]):
        if a >= b:
            continue
        d, r = deaths[a:b], at_risk[a:b]
        vals = base * (r - d).astype(float) / base_risk
        # Groups without deaths carry the previous value forward.
        ev = d > 0
        last = np.maximum.accumulate(np.where(ev, np.arange(b - a), -1))
        seg = np.where(last >= 0, vals[np.maximum(last, 0)], base)
        surv[a:b] = seg
        if leaving[b - 1] > deaths[b - 1]:
            base, base_risk = float(seg[-1]), float(at_risk[b - 1] - leaving[b - 1])
    return surv


def km_strata(time, event, strata, k, horizons):
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(bool)
    strata = np.asarray(strata, dtype=np.int64)
    horizons = np.asarray(horizons, dtype=float)
    out = np.full((k, horizons.size + 1), np.nan)
    for s in range(k):
        rows = strata == s
        if not rows.any():
            continue
        t, e = time[rows], event[rows]
        uniq, inverse = np.unique(t, return_inverse=True)
        deaths = np.bincount(inverse, weights=e, minlength=uniq.size).astype(np.int64)
        leaving = np.bincount(inverse, minlength=uniq.size)
        at_risk = t.size - np.concatenate([[0], np.cumsum(leaving)[:-1]])
        ev = deaths > 0
        et = uniq[ev]
        surv = product_limit(deaths, leaving, at_risk)[ev]
        last = t.max()
        for j, hz in enumerate(horizons):
            pos = np.searchsorted(et, hz, side="right")
            value = 1.0 if pos == 0 else surv[pos - 1]
            if hz <= last or value == 0.0:
                out[s, j] = value
        below = np.nonzero(surv <= 0.5 + MEDIAN_TOL)[0]
        if below.size:
            out[s, -1] = et[below[0]]
    return out
