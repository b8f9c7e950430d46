"""The compiled kernels and their numpy twins must agree bit for bit."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from labelboot import _backend, _kernels_py

compiled = pytest.importorskip("labelboot._kernels")


def test_backend_selected():
    assert _backend.BACKEND in ("cython", "python")


def same(a, b):
    return np.array_equal(a, b, equal_nan=True)


@given(st.integers(0, 2**32 - 1), st.integers(1, 80), st.integers(2, 5))
def test_parity(seed, n, k):
    gen = np.random.default_rng(seed)
    time = np.sort(gen.integers(1, 15, n).astype(float))
    event = (gen.random(n) < 0.6).astype(np.uint8)
    strata = gen.integers(0, k, n)
    h = np.array([2.0, 7.0, 14.0, 30.0])
    assert same(compiled.km_strata(time, event, strata, k, h), _kernels_py.km_strata(time, event, strata, k, h))
    ranks = gen.integers(0, n, n)
    assert same(compiled.km_resample(ranks, strata, time, event, k, h),
                _kernels_py.km_resample(ranks, strata, time, event, k, h))
    pred, true = gen.integers(0, k, n), gen.integers(0, k, n)
    table = compiled.confusion(pred, true, k)
    assert same(table, _kernels_py.confusion(pred, true, k))
    assert same(compiled.measures(table), _kernels_py.measures(table))
    masks = gen.integers(0, 1 << k, n)
    u = gen.random(n)
    assert same(compiled.sample_from_masks(masks, u, k), _kernels_py.sample_from_masks(masks, u, k))


def test_sampler_edge_of_unit_interval():
    masks = np.array([0b101, 0, 0b111], dtype=np.int64)
    u = np.full(3, np.nextafter(1.0, 0.0))
    for mod in (compiled, _kernels_py):
        assert mod.sample_from_masks(masks, u, 3).tolist() == [2, 2, 2]


def test_km_resample_equals_sorted_km_strata():
    gen = np.random.default_rng(1)
    time = np.sort(gen.integers(1, 40, 200).astype(float))
    event = (gen.random(200) < 0.5).astype(np.uint8)
    idx = gen.integers(0, 200, 200)
    strata = gen.integers(0, 3, 200)
    h = np.array([10.0, 30.0])
    order = np.argsort(idx, kind="stable")
    direct = compiled.km_strata(time[idx][order], event[idx][order], strata[order], 3, h)
    assert same(compiled.km_resample(idx, strata, time, event, 3, h), direct)


def test_pure_python_backend_in_subprocess():
    import os
    import subprocess
    import sys
    env = dict(os.environ, LABELBOOT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import labelboot; print(labelboot.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
