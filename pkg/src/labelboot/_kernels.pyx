# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the bootstrap engine.

Every function here has a pure-Python twin in ``_kernels_py`` with the same
signature and the same floating-point operation order, so both backends
return identical numbers.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport NAN, isnan

cnp.import_array()


def sample_from_masks(const cnp.int64_t[::1] masks, const double[::1] u, int k):
    """Uniform pick among the set bits of each mask; all ``k`` labels when empty."""
    cdef Py_ssize_t n = masks.shape[0], i
    cdef int y, c, j, target
    cdef cnp.int64_t m
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    with nogil:
        for i in range(n):
            m = masks[i]
            c = 0
            for y in range(k):
                c += (m >> y) & 1
            if c == 0:
                target = <int>(u[i] * k)
                if target >= k:
                    target = k - 1
                o[i] = target
                continue
            target = <int>(u[i] * c)
            if target >= c:
                target = c - 1
            j = -1
            for y in range(k):
                if (m >> y) & 1:
                    j += 1
                    if j == target:
                        o[i] = y
                        break
    return out


def confusion(const cnp.int64_t[::1] pred, const cnp.int64_t[::1] true, int k):
    """One-vs-rest (tp, tn, fp, fn) per class for 0-based labels."""
    cdef Py_ssize_t n = pred.shape[0], i
    cdef int y
    out = np.zeros((k, 4), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    with nogil:
        for i in range(n):
            if pred[i] == true[i]:
                o[pred[i], 0] += 1
            else:
                o[pred[i], 2] += 1
                o[true[i], 3] += 1
        for y in range(k):
            o[y, 1] = n - o[y, 0] - o[y, 2] - o[y, 3]
    return out


cdef inline double _ratio(double num, double den) nogil:
    if den > 0:
        return num / den
    return NAN


def measures(const cnp.int64_t[:, ::1] table):
    """Accuracy, sensitivity, specificity, PPV per class; column ``k`` is the macro mean.

    Undefined (0/0) cells are NaN and excluded from the macro mean.
    """
    cdef Py_ssize_t k = table.shape[0], y, m
    cdef double tp, tn, fp, fn, total, v
    cdef int cnt
    out = np.empty((4, k + 1))
    cdef double[:, ::1] o = out
    with nogil:
        for y in range(k):
            tp = table[y, 0]
            tn = table[y, 1]
            fp = table[y, 2]
            fn = table[y, 3]
            o[0, y] = _ratio(tp + tn, tp + tn + fp + fn)
            o[1, y] = _ratio(tp, tp + fn)
            o[2, y] = _ratio(tn, tn + fp)
            o[3, y] = _ratio(tp, tp + fp)
        for m in range(4):
            total = 0.0
            cnt = 0
            for y in range(k):
                v = o[m, y]
                if not isnan(v):
                    total = total + v
                    cnt += 1
            o[m, k] = total / cnt if cnt > 0 else NAN
    return out


cdef double MEDIAN_TOL = 1e-12


cdef void _km_core(const double[::1] time, const cnp.uint8_t[::1] event,
                   const cnp.int64_t[::1] strata, int k, const double[::1] horizons,
                   double[:, ::1] o, cnp.int64_t[:, ::1] wi, double[:, ::1] wf) noexcept nogil:
    # wi rows: at risk, deaths, leaving, horizon cursor, run base risk
    # wf rows: survival, last follow-up, run base survival
    cdef Py_ssize_t n = time.shape[0], h = horizons.shape[0]
    cdef Py_ssize_t i, g, s
    cdef double tau
    for s in range(k):
        wi[0, s] = 0
        wi[1, s] = 0
        wi[2, s] = 0
        wi[3, s] = 0
        wf[0, s] = 1.0
        wf[1, s] = -1.0
        wf[2, s] = 1.0
        for i in range(h + 1):
            o[s, i] = NAN
    for i in range(n):
        wi[0, strata[i]] += 1
        wf[1, strata[i]] = time[i]
    for s in range(k):
        wi[4, s] = wi[0, s]
    i = 0
    while i < n:
        tau = time[i]
        # Horizons strictly before this time see the current survival.
        for s in range(k):
            while wi[3, s] < h and horizons[wi[3, s]] < tau:
                if wf[1, s] >= 0 and (horizons[wi[3, s]] <= wf[1, s] or wf[0, s] == 0.0):
                    o[s, wi[3, s]] = wf[0, s]
                wi[3, s] += 1
        g = i
        while g < n and time[g] == tau:
            wi[1, strata[g]] += event[g]
            wi[2, strata[g]] += 1
            g += 1
        for s in range(k):
            if wi[2, s] == 0:
                continue
            if wi[1, s] > 0:
                # Telescoped product over the censor-free run since the base.
                wf[0, s] = wf[2, s] * <double>(wi[0, s] - wi[1, s]) / <double>wi[4, s]
                if wf[0, s] <= 0.5 + MEDIAN_TOL and isnan(o[s, h]):
                    o[s, h] = tau
            if wi[2, s] > wi[1, s]:
                wf[2, s] = wf[0, s]
                wi[4, s] = wi[0, s] - wi[2, s]
            wi[0, s] -= wi[2, s]
            wi[1, s] = 0
            wi[2, s] = 0
        i = g
    for s in range(k):
        if wf[1, s] < 0:
            continue
        while wi[3, s] < h:
            if horizons[wi[3, s]] <= wf[1, s] or wf[0, s] == 0.0:
                o[s, wi[3, s]] = wf[0, s]
            wi[3, s] += 1


def km_strata(const double[::1] time, const cnp.uint8_t[::1] event,
              const cnp.int64_t[::1] strata, int k, const double[::1] horizons):
    """Kaplan-Meier summaries per stratum from time-sorted rows.

    Returns a ``k x (len(horizons) + 1)`` array: survival at each horizon
    followed by the median (first event time with S <= 0.5, up to rounding). NaN marks an
    empty stratum, a horizon past unresolved follow-up, or a median not
    reached.
    """
    out = np.empty((k, horizons.shape[0] + 1))
    _km_core(time, event, strata, k, horizons, out, np.empty((5, k), dtype=np.int64), np.empty((3, k)))
    return out


def km_resample(const cnp.int64_t[::1] ranks, const cnp.int64_t[::1] strata,
                const double[::1] time_sorted, const cnp.uint8_t[::1] event_sorted,
                int k, const double[::1] horizons):
    """:func:`km_strata` for a resample given by time ranks in draw order.

    A stable counting sort on ``ranks`` puts the resampled rows in time
    order without a comparison sort.
    """
    cdef Py_ssize_t n = ranks.shape[0], m = time_sorted.shape[0], i, r, pos
    start_a = np.zeros(m + 1, dtype=np.int64)
    t_a = np.empty(n)
    e_a = np.empty(n, dtype=np.uint8)
    s_a = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] start = start_a, s = s_a
    cdef double[::1] t = t_a
    cdef cnp.uint8_t[::1] e = e_a
    with nogil:
        for i in range(n):
            start[ranks[i] + 1] += 1
        for r in range(m):
            start[r + 1] += start[r]
        for i in range(n):
            r = ranks[i]
            pos = start[r]
            start[r] += 1
            t[pos] = time_sorted[r]
            e[pos] = event_sorted[r]
            s[pos] = strata[i]
    out = np.empty((k, horizons.shape[0] + 1))
    _km_core(t_a, e_a, s_a, k, horizons, out, np.empty((5, k), dtype=np.int64), np.empty((3, k)))
    return out
