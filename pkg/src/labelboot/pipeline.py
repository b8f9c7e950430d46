"""Simulation pipeline: one repetition, many repetitions, report files.

Every repetition produces long-format rows ``(rep, method, class,
statistic, value, lo, hi, defined)``. Aggregates are a pure function of
those rows, so they can be recomputed from ``report.json`` at any time.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bootstrap import (
    ConfusionStatistic,
    CoverageStatistic,
    MetricsStatistic,
    SurvivalStatistic,
    run_bootstrap,
)
from .conformal import (
    ambiguity_profile,
    build_label_sets,
    class_coverage,
    estimate_thresholds,
    split_development,
)
from .core import LabelSets, RngSpec
from .errors import LabelbootError, RepetitionFailed, ValidationError
from .estimators import OptConfig, Penalty, fit_multinomial, predict_proba
from .labeling import LabelerKind, argmax_label
from .metrics import MEASURES, class_metrics, confusion_counts
from .simgen import K, SimConfig, scenario_features, simulate, split_cohorts
from .survival import DEFAULT_HORIZONS, stratified_estimates

SCHEMA_VERSION = 1
METHODS = ("naive", "naive_boot", "weighted_boot")
ALGORITHM = "multinomial_logit"
SURVIVAL_STATS = ("surv90", "surv365", "median")


@dataclass(frozen=True)
class RunConfig:
    scenario: int = 1
    n: int = 2000
    n_boot: int = 200
    n_reps: int = 200
    alpha: tuple = (0.10, 0.10, 0.10)
    methods: tuple = METHODS
    penalty: Penalty = field(default_factory=Penalty.none)
    label_mode: str = "argmax"
    beta: float = 0.7
    seed: int = 20200
    workers: int = 1
    level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in np.broadcast_to(self.alpha, (K,))))
        object.__setattr__(self, "methods", tuple(self.methods))
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValidationError(f"unknown methods {sorted(bad)}")
        if any(not 0 < a < 1 for a in self.alpha):
            raise ValidationError("alpha must lie in (0, 1)")
        if self.n_boot < 2 and any(m.endswith("_boot") for m in self.methods):
            raise ValidationError("n_boot must be >= 2 for bootstrap methods")
        if self.n_reps < 1:
            raise ValidationError("n_reps must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["alpha"] = list(self.alpha)
        d["methods"] = list(self.methods)
        d["penalty"] = self.penalty.to_dict()
        d["horizons"] = list(DEFAULT_HORIZONS)
        d["algorithm"] = ALGORITHM
        d["sim"] = self.sim_config(0).to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        keys = {f for f in cls.__dataclass_fields__}
        kw = {k: v for k, v in d.items() if k in keys}
        if "penalty" in kw:
            kw["penalty"] = Penalty.from_dict(kw["penalty"])
        for name in ("alpha", "methods"):
            if name in kw:
                kw[name] = tuple(kw[name])
        return cls(**kw)

    def rep_rng(self, rep):
        return RngSpec(self.seed).child(rep)

    def sim_config(self, rep):
        return SimConfig(n=self.n, scenario=self.scenario, beta=self.beta,
                         label_mode=self.label_mode, rng=self.rep_rng(rep).child(0))


def _row(rep, method, cls, stat, value, lo=math.nan, hi=math.nan, defined=1):
    value = float(value)
    return {
        "rep": int(rep), "method": method, "class": str(cls), "statistic": stat,
        "value": value, "lo": float(lo), "hi": float(hi),
        "defined": int(defined) if not math.isnan(value) else 0,
    }


def _single_iteration_rows(rep, method, pred, val, obs_surv, coverage, k=K):
    rows = []
    cc = confusion_counts(pred, val.labels, k)
    cm = class_metrics(cc)
    for y in range(1, k + 1):
        rows.append(_row(rep, method, y, "coverage", coverage[y - 1]))
        for j, c in enumerate(("tp", "tn", "fp", "fn")):
            rows.append(_row(rep, method, y, c, cc.table[y - 1, j]))
    for m in MEASURES:
        for y in range(1, k + 1):
            rows.append(_row(rep, method, y, m, cm.per_class[m][y - 1]))
        rows.append(_row(rep, method, "macro", m, cm.macro[m]))
    if val.survival is not None:
        est = stratified_estimates(val.survival, pred, k).values
        rows.extend(_survival_rows(rep, method, est, obs_surv))
    return rows


def _survival_rows(rep, method, est, obs, lo=None, hi=None, defined=None):
    rows = []
    for y in range(1, est.shape[0] + 1):
        for j, s in enumerate(SURVIVAL_STATS):
            v = est[y - 1, j]
            kw = {}
            if lo is not None:
                kw = {"lo": lo[y - 1, j], "hi": hi[y - 1, j], "defined": defined[y - 1, j]}
            rows.append(_row(rep, method, y, s, v, **kw))
            if obs is not None:
                rows.append(_row(rep, method, y, f"bias_{s}", v - obs[y - 1, j]))
    return rows


def _boot_rows(rep, method, summaries, obs_surv):
    rows = []
    by_name = {s.name: s for s in summaries}
    cov = by_name["coverage"]
    for j, col in enumerate(cov.columns):
        rows.append(_row(rep, method, col, "coverage", cov.mean[j], cov.lo[j], cov.hi[j], cov.defined_count[j]))
    for name in ("confusion", "metrics"):
        s = by_name[name]
        for j, col in enumerate(s.columns):
            stat, cls = col[:-1].split("[")
            rows.append(_row(rep, method, cls, stat, s.mean[j], s.lo[j], s.hi[j], s.defined_count[j]))
    s = by_name.get("survival")
    if s is None:
        return rows
    shape = (s.mean.size // len(SURVIVAL_STATS), len(SURVIVAL_STATS))
    rows.extend(_survival_rows(rep, method, s.mean.reshape(shape), obs_surv,
                               s.lo.reshape(shape), s.hi.reshape(shape), s.defined_count.reshape(shape)))
    return rows


def run_scenario(cfg: RunConfig, rep: int = 0):
    """Run one repetition and return its long-format rows."""
    stage = "simulate"
    rng = cfg.rep_rng(rep)
    try:
        full = simulate(cfg.sim_config(rep))
        full = full.with_features(scenario_features(full.features, cfg.scenario))
        stage = "split cohorts"
        dev, val = split_cohorts(full, rng.child(1))
        obs = stratified_estimates(val.survival, val.labels, K).values
        rows = _survival_rows(rep, "observed", obs, None)
        opt = OptConfig()

        if "weighted_boot" in cfg.methods:
            stage = "weighted: development split"
            split = split_development(dev, rng.child(2), K)
            fit_half, calib = dev.take(split.i1), dev.take(split.i2)
            stage = "weighted: fit"
            model = fit_multinomial(fit_half, cfg.penalty, opt, k=K)
            stage = "weighted: thresholds"
            p_cal = predict_proba(model, calib.features)
            thr = estimate_thresholds(p_cal, calib.labels, cfg.alpha)
            calib_cov = class_coverage(build_label_sets(p_cal, thr), calib.labels)
            p_val = predict_proba(model, val.features)
            sets = build_label_sets(p_val, thr)
            val_cov = class_coverage(sets, val.labels)
            prof = ambiguity_profile(sets, val.labels)
            overall, by_class = prof.shares()
            for y in range(1, K + 1):
                rows.append(_row(rep, "weighted_boot", y, "threshold", thr.t[y - 1]))
                rows.append(_row(rep, "weighted_boot", y, "calib_coverage", calib_cov[y - 1]))
                rows.append(_row(rep, "weighted_boot", y, "coverage_validation", val_cov[y - 1]))
            for c in range(K + 1):
                rows.append(_row(rep, "weighted_boot", "all", f"card{c}", overall[c]))
                for y in range(1, K + 1):
                    rows.append(_row(rep, "weighted_boot", y, f"card{c}", by_class[y - 1, c]))
            stage = "weighted: bootstrap"
            stats = [CoverageStatistic(sets), ConfusionStatistic(K), MetricsStatistic(K),
                     SurvivalStatistic(val, K)]
            summaries = run_bootstrap(val, p_val, LabelerKind.WEIGHTED_SET_SAMPLER, stats, cfg.n_boot,
                                      rng.child(3), thresholds=thr, level=cfg.level)
            rows.extend(_boot_rows(rep, "weighted_boot", summaries, obs))

        naive_methods = [m for m in ("naive", "naive_boot") if m in cfg.methods]
        if naive_methods:
            stage = "naive: fit"
            model = fit_multinomial(dev, cfg.penalty, opt, k=K)
            p_val = predict_proba(model, val.features)
            pred = argmax_label(p_val)
            singletons = LabelSets.singletons(pred, K)
            coverage = class_coverage(singletons, val.labels)
            if "naive" in cfg.methods:
                rows.extend(_single_iteration_rows(rep, "naive", pred, val, obs, coverage))
            if "naive_boot" in cfg.methods:
                stage = "naive: bootstrap"
                stats = [CoverageStatistic(singletons), ConfusionStatistic(K), MetricsStatistic(K),
                         SurvivalStatistic(val, K)]
                summaries = run_bootstrap(val, p_val, LabelerKind.NAIVE_ARGMAX, stats, cfg.n_boot,
                                          rng.child(4), level=cfg.level)
                rows.extend(_boot_rows(rep, "naive_boot", summaries, obs))
    except LabelbootError as exc:
        raise RepetitionFailed(rep, (cfg.seed, rep), stage, exc) from exc
    return rows


def _nanquantile(x, q):
    return float(np.quantile(x, q, method="linear")) if x.size else math.nan


def aggregate(rows, level=0.95):
    """Across-repetition summaries per (method, class, statistic)."""
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], r["class"], r["statistic"]), []).append(r)
    out = []
    q = (1.0 - level) / 2.0
    for (method, cls, stat), rs in groups.items():
        rs = sorted(rs, key=lambda r: r["rep"])
        v = np.array([r["value"] for r in rs], dtype=float)
        d = v[~np.isnan(v)]
        mean = float(d.mean()) if d.size else math.nan
        sd = float(d.std(ddof=1)) if d.size >= 2 else math.nan
        lo = np.array([r["lo"] for r in rs], dtype=float)
        hi = np.array([r["hi"] for r in rs], dtype=float)
        out.append({
            "method": method, "class": cls, "statistic": stat,
            "mean": mean, "sd": sd, "n_reps": len(rs), "defined_count": int(d.size),
            "rep_lo": _nanquantile(d, q), "rep_hi": _nanquantile(d, 1.0 - q),
            "rule_lo": mean - 0.95 * sd, "rule_hi": mean + 0.95 * sd,
            "norm_lo": mean - 1.96 * sd, "norm_hi": mean + 1.96 * sd,
            "boot_lo": float(np.nanmean(lo)) if np.any(~np.isnan(lo)) else math.nan,
            "boot_hi": float(np.nanmean(hi)) if np.any(~np.isnan(hi)) else math.nan,
        })
    return out


@dataclass
class RepetitionReport:
    config: dict
    rows: list
    aggregates: list
    schema_version: int = SCHEMA_VERSION

    def lookup(self, method, cls, statistic):
        for a in self.aggregates:
            if a["method"] == method and a["class"] == str(cls) and a["statistic"] == statistic:
                return a
        raise KeyError((method, cls, statistic))

    def values(self, method, cls, statistic):
        """Per-repetition values in repetition order."""
        rs = [r for r in self.rows if r["method"] == method and r["class"] == str(cls) and r["statistic"] == statistic]
        return np.array([r["value"] for r in sorted(rs, key=lambda r: r["rep"])], dtype=float)

    def to_json(self):
        return json.dumps(_nan_to_none({
            "schema_version": self.schema_version,
            "config": self.config,
            "repetitions": self.rows,
            "aggregates": self.aggregates,
        }), sort_keys=True, indent=1, allow_nan=False)

    @classmethod
    def from_json(cls, text):
        d = _none_to_nan(json.loads(text))
        return cls(d["config"], d["repetitions"], d["aggregates"], d["schema_version"])

    def __eq__(self, other):
        return isinstance(other, RepetitionReport) and self.to_json() == other.to_json()


_FLOAT_KEYS = {"value", "lo", "hi", "mean", "sd", "rep_lo", "rep_hi", "rule_lo", "rule_hi",
               "norm_lo", "norm_hi", "boot_lo", "boot_hi"}


def _nan_to_none(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) else obj
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nan_to_none(v) for v in obj]
    return obj


def _none_to_nan(obj, key=None):
    if obj is None and key in _FLOAT_KEYS:
        return math.nan
    if isinstance(obj, dict):
        return {k: _none_to_nan(v, k) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_none_to_nan(v, key) for v in obj]
    return obj


def run_repetitions(cfg: RunConfig, n_reps: Optional[int] = None, progress=None) -> RepetitionReport:
    """Run repetitions on independent streams and aggregate.

    Results are collected in repetition order, so the worker count cannot
    change the report.
    """
    n_reps = cfg.n_reps if n_reps is None else n_reps
    reps = range(n_reps)
    rows = []
    if cfg.workers > 1 and n_reps > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for i, r in enumerate(pool.map(run_scenario, [cfg] * n_reps, reps)):
                rows.extend(r)
                if progress:
                    progress(i + 1, n_reps)
    else:
        for i in reps:
            rows.extend(run_scenario(cfg, i))
            if progress:
                progress(i + 1, n_reps)
    config = cfg.to_dict()
    config["n_reps"] = n_reps
    # Scheduling must not leak into the report.
    config.pop("workers")
    return RepetitionReport(config, rows, aggregate(rows, cfg.level))


def evaluate_probabilities(val, probs, methods=METHODS, thresholds=None, n_boot=200, seed=0,
                           level=0.95, k=K):
    """Score one set of validation probabilities with each labeling method.

    This is the tail of :func:`run_scenario` for probabilities that come
    from elsewhere (a saved model or an external CSV). ``thresholds`` is
    required for ``weighted_boot``. Survival rows appear only when ``val``
    carries survival data. Returns long-format rows with ``rep = 0``.
    """
    rng = RngSpec(seed)
    rows = []
    has_surv = val.survival is not None
    obs = stratified_estimates(val.survival, val.labels, k).values if has_surv else None
    if obs is not None:
        rows.extend(_survival_rows(0, "observed", obs, None))

    def boot(method, sets, labeler, stream, thr=None):
        stats = [CoverageStatistic(sets), ConfusionStatistic(k), MetricsStatistic(k)]
        if has_surv:
            stats.append(SurvivalStatistic(val, k))
        summaries = run_bootstrap(val, probs, labeler, stats, n_boot, rng.child(stream),
                                  thresholds=thr, level=level)
        return _boot_rows(0, method, summaries, obs)

    if "weighted_boot" in methods:
        if thresholds is None:
            raise ValidationError("weighted_boot needs thresholds")
        sets = build_label_sets(probs, thresholds)
        overall, by_class = ambiguity_profile(sets, val.labels).shares()
        cov = class_coverage(sets, val.labels, strict=False)
        for y in range(1, k + 1):
            rows.append(_row(0, "weighted_boot", y, "threshold", thresholds.t[y - 1]))
            rows.append(_row(0, "weighted_boot", y, "coverage_validation", cov[y - 1]))
        for c in range(k + 1):
            rows.append(_row(0, "weighted_boot", "all", f"card{c}", overall[c]))
            for y in range(1, k + 1):
                rows.append(_row(0, "weighted_boot", y, f"card{c}", by_class[y - 1, c]))
        rows.extend(boot("weighted_boot", sets, LabelerKind.WEIGHTED_SET_SAMPLER, 3, thresholds))
    pred = argmax_label(probs)
    singletons = LabelSets.singletons(pred, k)
    if "naive" in methods:
        rows.extend(_single_iteration_rows(0, "naive", pred, val, obs,
                                           class_coverage(singletons, val.labels, strict=False), k))
    if "naive_boot" in methods:
        rows.extend(boot("naive_boot", singletons, LabelerKind.NAIVE_ARGMAX, 4))
    return rows


CSV_FILES = {
    "coverage.csv": ("coverage", "coverage_validation", "calib_coverage"),
    "thresholds.csv": ("threshold",),
    "metrics.csv": ("tp", "tn", "fp", "fn") + MEASURES,
    "ambiguity.csv": tuple(f"card{c}" for c in range(K + 1)),
    "survival.csv": SURVIVAL_STATS + tuple(f"bias_{s}" for s in SURVIVAL_STATS),
}
SURVIVAL_COLUMNS = ("method", "algorithm", "class", "statistic", "estimate", "lo", "hi", "defined_count",
                    "interval", "sd", "lo_196", "hi_196")
TABLE_COLUMNS = ("method", "algorithm", "class", "statistic", "estimate", "lo", "hi", "defined_count",
                 "interval", "sd")


def _interval(a):
    """Bootstrap methods carry averaged percentile bounds; others the 0.95*sd rule."""
    if a["method"].endswith("_boot") and not math.isnan(a["boot_lo"]):
        return a["boot_lo"], a["boot_hi"], "bootstrap percentile (mean over reps)"
    return a["rule_lo"], a["rule_hi"], "paper-rule interval: mean +/- 0.95*sd"


def _fmt(x):
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def emit_report(report: Optional[RepetitionReport], out_dir, formats=("csv", "json"), run_config=None):
    """Write the report files and return their paths.

    ``run_config`` overrides what goes into ``run_config.json`` (the CLI
    passes every resolved setting there, including ones kept out of the
    report such as the worker count).
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    cfg_path = out / "run_config.json"
    cfg = run_config if run_config is not None else (report.config if report is not None else {})
    cfg_path.write_text(json.dumps(_nan_to_none(cfg), sort_keys=True, indent=1) + "\n")
    written.append(cfg_path)
    if report is None or not report.config.get("methods"):
        return written
    if "json" in formats:
        p = out / "report.json"
        p.write_text(report.to_json() + "\n")
        written.append(p)
    if "csv" in formats:
        for name, stats in CSV_FILES.items():
            cols = SURVIVAL_COLUMNS if name == "survival.csv" else TABLE_COLUMNS
            p = out / name
            with p.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                for a in report.aggregates:
                    if a["statistic"] not in stats:
                        continue
                    lo, hi, rule = _interval(a)
                    row = [a["method"], ALGORITHM, a["class"], a["statistic"], a["mean"], lo, hi,
                           a["defined_count"], rule, a["sd"]]
                    if name == "survival.csv":
                        row += [a["norm_lo"], a["norm_hi"]]
                    w.writerow([_fmt(x) for x in row])
            written.append(p)
    return written
