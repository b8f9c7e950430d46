"""Compare the compiled kernels with their numpy twins.

    python3 benchmarks/bench_kernels.py [--n 1000] [--repeat 200]

Times each kernel on validation-cohort-sized inputs, then a full
bootstrap (weighted labeling, all statistics) with each backend swapped
in. Both backends must produce the same bootstrap summaries; the script
exits non-zero if they differ.
"""
import argparse
import sys
import timeit

import numpy as np

from labelboot import _backend, _kernels_py
from labelboot.bootstrap import (
    ConfusionStatistic,
    CoverageStatistic,
    MetricsStatistic,
    SurvivalStatistic,
    run_bootstrap,
)
from labelboot.conformal import build_label_sets, estimate_thresholds
from labelboot.core import ClassProbabilities, LabeledDataset, FeatureMatrix, RngSpec, SurvivalData
from labelboot.labeling import LabelerKind

try:
    from labelboot import _kernels as _compiled
except ImportError:
    _compiled = None

KERNELS = ("sample_from_masks", "confusion", "measures", "km_strata", "km_resample")


def make_inputs(n, k=3, seed=0):
    gen = np.random.default_rng(seed)
    time = np.sort(np.round(gen.exponential(60.0, n), 1))
    event = (gen.random(n) < 0.8).astype(np.uint8)
    strata = gen.integers(0, k, n)
    pred, true = gen.integers(0, k, n), gen.integers(0, k, n)
    table = _kernels_py.confusion(pred, true, k)
    ranks = gen.integers(0, n, n)
    masks = gen.integers(0, 1 << k, n)
    u = gen.random(n)
    h = np.array([90.0, 365.0])
    return {
        "sample_from_masks": (masks, u, k),
        "confusion": (pred, true, k),
        "measures": (table,),
        "km_strata": (time, event, strata, k, h),
        "km_resample": (ranks, strata, time, event, k, h),
    }


def make_problem(n, k=3, seed=1):
    gen = np.random.default_rng(seed)
    logits = gen.normal(size=(2 * n, k)) * 1.5
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    labels = np.array([gen.choice(k, p=row) for row in p]) + 1
    time = np.round(gen.exponential(30.0 * labels), 1)
    event = time <= 365
    ds = LabeledDataset(FeatureMatrix(np.zeros((2 * n, 1))), labels, SurvivalData(np.minimum(time, 365), event))
    cal, val = np.arange(n), np.arange(n, 2 * n)
    probs = ClassProbabilities(p)
    thr = estimate_thresholds(probs.take(cal), labels[cal], (0.1,) * k)
    return ds.take(val), probs.take(val), thr


def bootstrap_once(module, val, probs, thr, n_boot):
    saved = {name: getattr(_backend, name) for name in KERNELS}
    try:
        for name in KERNELS:
            setattr(_backend, name, getattr(module, name))
        sets = build_label_sets(probs, thr)
        stats = [CoverageStatistic(sets), ConfusionStatistic(3), MetricsStatistic(3), SurvivalStatistic(val, 3)]
        return run_bootstrap(val, probs, LabelerKind.WEIGHTED_SET_SAMPLER, stats, n_boot, RngSpec(5),
                             thresholds=thr)
    finally:
        for name, fn in saved.items():
            setattr(_backend, name, fn)


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000, help="rows per call (validation cohort size)")
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--n-boot", type=int, default=200)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled kernels not built; only the numpy twins are available")
        return 1

    inputs = make_inputs(args.n)
    print(f"{'kernel':<20}{'numpy (us)':>12}{'cython (us)':>13}{'speedup':>9}")
    for name in KERNELS:
        a = inputs[name]
        tp = best_of(lambda: getattr(_kernels_py, name)(*a), args.repeat) * 1e6
        tc = best_of(lambda: getattr(_compiled, name)(*a), args.repeat) * 1e6
        print(f"{name:<20}{tp:12.1f}{tc:13.1f}{tp / tc:9.1f}x")

    val, probs, thr = make_problem(args.n)
    res = {}
    for label, module in (("numpy", _kernels_py), ("cython", _compiled)):
        t = best_of(lambda: res.__setitem__(label, bootstrap_once(module, val, probs, thr, args.n_boot)), 3)
        print(f"bootstrap x{args.n_boot} ({label}): {t:.3f} s")
    same = all(np.array_equal(a.mean, b.mean, equal_nan=True) and np.array_equal(a.lo, b.lo, equal_nan=True)
               for a, b in zip(res["numpy"], res["cython"]))
    print("backends agree" if same else "BACKENDS DISAGREE")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
