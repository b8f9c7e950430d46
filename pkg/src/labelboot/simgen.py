"""Synthetic cohort generator: covariates, three-class labels, censored survival.

Normal covariates are parameterized by mean and standard deviation. The
correlated count pair (x14, x15) comes from a Gaussian copula: a bivariate
normal with means (1, 3), unit variances and correlation 0.7 is centered,
pushed through the standard normal CDF and then through the Poisson(3)
quantile function, giving exact Poisson(3) margins.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .conformal import stratified_halves
from .core import BINARY, CONTINUOUS, COUNT, FeatureMatrix, LabeledDataset, RngSpec, SurvivalData
from .errors import ValidationError

K = 3
COLUMNS = tuple(f"x{j}" for j in range(1, 16))

NORMAL_COLUMNS = {  # name: (mean, sd)
    "x1": (75.0, 5.0),
    "x2": (45000.0, 10000.0),
    "x3": (23.0, 4.0),
    "x4": (70.0, 5.0),
    "x5": (5.0, 2.0),
    "x6": (0.0, 1.0),
}
BERNOULLI_COLUMNS = {
    "x7": 0.5,
    "x8": 0.25,
    "x9": 0.3,
    "x10": 0.7,
    "x11": 0.6,
    "x12": 0.7,
    "x13": 0.4,
}
COUNT_MVN_MEAN = (1.0, 3.0)
COUNT_MVN_CORR = 0.7
COUNT_POISSON_MEAN = 3.0

SCENARIO_MASKS = {
    1: ("x1", "x3", "x5", "x6", "x7", "x8", "x9", "x10", "x11", "x13"),
    2: ("x1", "x2", "x3", "x4", "x5", "x6", "x13"),
    3: ("x2", "x4", "x5", "x6", "x7", "x8", "x9", "x10", "x12", "x13", "x14", "x15"),
}
GENERATING_COLUMNS = ("x1", "x3", "x5", "x7", "x9", "x10", "x11", "x14")

LABEL_MODES = ("argmax", "categorical_draw")


@dataclass(frozen=True)
class SimConfig:
    n: int = 2000
    scenario: int = 1
    shape: float = 1.0
    scale: float = 90.0
    beta: float = 0.7
    horizon: float = 365.0
    label_mode: str = "argmax"
    rng: RngSpec = field(default_factory=lambda: RngSpec(0))

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0 or self.horizon <= 0:
            raise ValidationError("shape, scale and horizon must be positive")
        if self.n < 4 * K:
            raise ValidationError(f"n must be >= {4 * K}")
        if self.scenario not in SCENARIO_MASKS:
            raise ValidationError(f"scenario must be one of {sorted(SCENARIO_MASKS)}")
        if self.label_mode not in LABEL_MODES:
            raise ValidationError(f"label_mode must be one of {LABEL_MODES}")

    def to_dict(self):
        d = asdict(self)
        d["rng"] = self.rng.to_dict()
        d["scenario_mask"] = list(SCENARIO_MASKS[self.scenario])
        d["beta_note"] = "class effect is not published; beta multiplies the class index"
        return d


def generate_covariates(n: int, rng) -> FeatureMatrix:
    """Draw the fifteen simulation covariates x1..x15."""
    gen = rng.generator() if isinstance(rng, RngSpec) else rng
    X = np.empty((n, 15))
    for name, (mu, sd) in NORMAL_COLUMNS.items():
        X[:, COLUMNS.index(name)] = gen.normal(mu, sd, n)
    for name, p in BERNOULLI_COLUMNS.items():
        X[:, COLUMNS.index(name)] = (gen.random(n) < p).astype(float)
    cov = np.array([[1.0, COUNT_MVN_CORR], [COUNT_MVN_CORR, 1.0]])
    z = gen.multivariate_normal(COUNT_MVN_MEAN, cov, size=n, method="cholesky")
    u = stats.norm.cdf(z - np.asarray(COUNT_MVN_MEAN))
    X[:, 13:15] = stats.poisson.ppf(u, COUNT_POISSON_MEAN)
    kinds = (CONTINUOUS,) * 6 + (BINARY,) * 7 + (COUNT,) * 2
    return FeatureMatrix(X, COLUMNS, kinds)


def linear_predictors(X):
    """The two class logits (classes 1 and 2 against reference class 3)."""
    v = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
    x = {name: v[:, j] for j, name in enumerate(COLUMNS)}
    inter = x["x7"] * x["x10"]
    root14 = np.sqrt(x["x14"])
    sin5 = np.sin(x["x5"])
    eta1 = 1.8 * (-8.25 + 0.2 * x["x1"] + 0.24 * inter - 0.3 * x["x3"] + 0.21 * root14
                  - 0.9 * x["x9"] + 0.9 * x["x11"] + 0.1 * sin5)
    eta2 = 1.8 * (-1.95 + 0.04 * x["x1"] + 0.5 * inter - 0.03 * x["x3"] + 0.032 * root14
                  - 0.02 * x["x9"] + 0.003 * x["x11"] + 0.31 * sin5)
    return eta1, eta2


def probabilities_from_predictors(eta1, eta2):
    e1, e2 = np.exp(eta1), np.exp(eta2)
    denom = 1.0 + e1 + e2
    return np.column_stack([e1 / denom, e2 / denom, 1.0 / denom])


def class_probabilities(X) -> np.ndarray:
    """True class probabilities for each row of the full x1..x15 matrix."""
    return probabilities_from_predictors(*linear_predictors(X))


def draw_labels(p, mode: str, rng) -> np.ndarray:
    """1-based labels: one categorical draw per row, or the argmax class."""
    p = np.asarray(p, dtype=float)
    if mode == "argmax":
        return np.argmax(p, axis=1).astype(np.int64) + 1
    if mode != "categorical_draw":
        raise ValidationError(f"unknown label mode {mode!r}")
    gen = rng.generator() if isinstance(rng, RngSpec) else rng
    u = gen.random(p.shape[0])
    cum = np.cumsum(p, axis=1)
    return np.minimum((u[:, None] >= cum).sum(axis=1), p.shape[1] - 1).astype(np.int64) + 1


def weibull_times(labels, u, shape, scale, beta):
    """Event times ``(-log(u) * scale * exp(-label * beta)) ** (1 / shape)``."""
    labels = np.asarray(labels, dtype=float)
    return (-np.log(u) * scale * np.exp(-labels * beta)) ** (1.0 / shape)


def simulate_survival(labels, cfg: SimConfig, rng) -> SurvivalData:
    gen = rng.generator() if isinstance(rng, RngSpec) else rng
    labels = np.asarray(labels)
    u = gen.random(labels.size)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    t = weibull_times(labels, u, cfg.shape, cfg.scale, cfg.beta)
    return SurvivalData(np.minimum(t, cfg.horizon), t <= cfg.horizon)


def simulate(cfg: SimConfig) -> LabeledDataset:
    """Full cohort with all fifteen covariates, labels and censored survival."""
    X = generate_covariates(cfg.n, cfg.rng.child(0))
    p = class_probabilities(X)
    y = draw_labels(p, cfg.label_mode, cfg.rng.child(1))
    surv = simulate_survival(y, cfg, cfg.rng.child(2))
    return LabeledDataset(X, y, surv)


def split_cohorts(ds: LabeledDataset, rng, k: int = K):
    """Stratified development / validation halves. Returns two datasets."""
    gen = rng.generator() if isinstance(rng, RngSpec) else rng
    dev, val = stratified_halves(ds.labels, gen, k)
    return ds.take(dev), ds.take(val)


def scenario_features(fm: FeatureMatrix, scenario: int) -> FeatureMatrix:
    return fm.select(SCENARIO_MASKS[scenario])
