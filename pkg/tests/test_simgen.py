import numpy as np
import pytest
from scipy import stats

from labelboot.core import RngSpec
from labelboot.errors import ValidationError
from labelboot.simgen import (
    COLUMNS,
    GENERATING_COLUMNS,
    SCENARIO_MASKS,
    SimConfig,
    class_probabilities,
    draw_labels,
    generate_covariates,
    linear_predictors,
    scenario_features,
    simulate,
    split_cohorts,
    weibull_times,
)


@pytest.fixture(scope="module")
def big():
    return generate_covariates(100_000, RngSpec(11))


def test_covariate_margins(big):
    X = big.values
    col = {c: X[:, j] for j, c in enumerate(COLUMNS)}
    for name, mu, sd in (("x1", 75, 5), ("x2", 45000, 10000), ("x3", 23, 4), ("x6", 0, 1)):
        assert col[name].mean() == pytest.approx(mu, abs=4 * sd / np.sqrt(X.shape[0]))
        assert col[name].std() == pytest.approx(sd, rel=0.02)
    for name, p in (("x7", 0.5), ("x8", 0.25), ("x12", 0.7)):
        assert col[name].mean() == pytest.approx(p, abs=0.01)
    assert big.kinds[13:] == ("count", "count")


def test_copula_gives_poisson_margins(big):
    for j in (13, 14):
        x = big.values[:, j]
        counts = np.bincount(x.astype(int), minlength=12)[:12]
        want = stats.poisson.pmf(np.arange(12), 3.0) * x.size
        assert np.all(np.abs(counts - want) < 5 * np.sqrt(want) + 5)
    r = np.corrcoef(big.values[:, 13], big.values[:, 14])[0, 1]
    assert 0.6 < r < 0.7  # count correlation sits a little under the latent 0.7


def test_probabilities_rows_sum_to_one(big):
    p = class_probabilities(big)
    assert np.allclose(p.sum(axis=1), 1.0)
    eta1, eta2 = linear_predictors(big)
    assert np.allclose(np.log(p[:, 0] / p[:, 2]), eta1)


def test_generating_columns_only():
    gen = np.random.default_rng(0)
    fm = generate_covariates(50, gen)
    X = fm.values.copy()
    base = class_probabilities(X)
    for j, name in enumerate(COLUMNS):
        if name in GENERATING_COLUMNS:
            continue
        X2 = X.copy()
        X2[:, j] += 1.0
        assert np.array_equal(class_probabilities(X2), base), name


def test_label_modes():
    p = np.array([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3]])
    assert draw_labels(p, "argmax", None).tolist() == [2, 1]
    d = draw_labels(np.tile(p[:1], (60000, 1)), "categorical_draw", RngSpec(1))
    assert np.bincount(d, minlength=4)[1:] / 60000 == pytest.approx([0.2, 0.5, 0.3], abs=0.01)
    with pytest.raises(ValidationError):
        draw_labels(p, "other", None)


def test_weibull_formula_and_censoring():
    u = np.array([0.5, np.exp(-1)])
    t = weibull_times(np.array([1, 3]), u, 1.0, 90.0, 0.7)
    assert t == pytest.approx([np.log(2) * 90 * np.exp(-0.7), 90 * np.exp(-2.1)])
    ds = simulate(SimConfig(n=3000, rng=RngSpec(2)))
    assert ds.survival.time.max() <= 365
    assert np.all(ds.survival.event == (ds.survival.time < 365))
    for y, rate in ((1, np.exp(0.7) / 90), (3, np.exp(2.1) / 90)):
        t = ds.survival.time[ds.labels == y]
        e = ds.survival.event[ds.labels == y]
        assert e.sum() / t.sum() == pytest.approx(rate, rel=0.15)


def test_simulation_reproducible():
    a = simulate(SimConfig(n=100, rng=RngSpec(5)))
    b = simulate(SimConfig(n=100, rng=RngSpec(5)))
    c = simulate(SimConfig(n=100, rng=RngSpec(6)))
    assert a == b and not a == c


def test_config_validation_and_metadata():
    with pytest.raises(ValidationError):
        SimConfig(scenario=4)
    with pytest.raises(ValidationError):
        SimConfig(shape=0)
    with pytest.raises(ValidationError):
        SimConfig(label_mode="x")
    d = SimConfig(scenario=2).to_dict()
    assert d["scenario_mask"] == list(SCENARIO_MASKS[2])
    assert d["beta"] == 0.7


def test_scenario_masks():
    assert len(SCENARIO_MASKS[1]) == 10 and len(SCENARIO_MASKS[2]) == 7 and len(SCENARIO_MASKS[3]) == 12
    assert set(GENERATING_COLUMNS) <= set(SCENARIO_MASKS[1]) | {"x14"}
    fm = generate_covariates(10, RngSpec(0))
    assert scenario_features(fm, 3).names == SCENARIO_MASKS[3]


def test_split_cohorts_stratified():
    ds = simulate(SimConfig(n=1001, rng=RngSpec(3)))
    dev, val = split_cohorts(ds, RngSpec(4))
    assert abs(dev.n - val.n) <= 1
    assert np.all(np.abs(dev.class_counts(3) - val.class_counts(3)) <= 1)
