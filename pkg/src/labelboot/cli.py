"""Command-line entry point: ``labelboot <subcommand> [options]``.

Every subcommand accepts ``--config FILE``, a key = value file (an optional
``[labelboot]`` section header is allowed) whose keys are the long option
names with dashes or underscores. Options given on the command line win
over the file. Each run writes ``run_config.json`` next to its outputs with
every resolved setting.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import _backend
from .conformal import (
    ThresholdVector,
    ambiguity_profile,
    build_label_sets,
    class_coverage,
    estimate_thresholds,
    split_development,
)
from .core import LabelSpace, RngSpec, read_dataset_csv, write_dataset_csv
from .errors import LabelbootError, ValidationError
from .estimators import (
    MultinomialModel,
    OptConfig,
    Penalty,
    fit_multinomial,
    ingest_probabilities,
    predict_proba,
    write_probabilities,
)
from .labeling import argmax_label
from .metrics import calibration_bins
from .pipeline import (
    METHODS,
    RepetitionReport,
    RunConfig,
    aggregate,
    emit_report,
    evaluate_probabilities,
    run_repetitions,
)
from .simgen import SCENARIO_MASKS, SimConfig, simulate, split_cohorts

PAPER_SCALE = {"n_reps": 1000, "n_boot": 500}
LONG_COLUMNS = ("method", "class", "statistic", "estimate", "lo", "hi", "defined_count")


def _alpha(text):
    try:
        vals = [float(a) for a in str(text).split(",") if a.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("alpha is empty")
    return tuple(vals)


def _methods(text):
    vals = tuple(m.strip() for m in str(text).split(",") if m.strip())
    bad = [m for m in vals if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown methods {bad}; choose from {METHODS}")
    return vals


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1, default=str) + "\n")


def _settings(args):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items())
            if k not in ("func", "config")}


def _penalty(args):
    kind = getattr(args, "penalty", "none")
    if kind == "none":
        return Penalty.none()
    return Penalty(kind, args.lam, args.mix)


def _add_penalty(p):
    p.add_argument("--penalty", choices=("none", "ridge", "lasso", "elastic_net"), default="none")
    p.add_argument("--lam", type=float, default=0.0, help="penalty strength")
    p.add_argument("--mix", type=float, default=1.0, help="elastic-net L1 share")


def _add_probs(p, need_data=True):
    p.add_argument("--data", required=need_data, help="dataset CSV (x.., label[, time, event])")
    p.add_argument("--probs", help="external probability CSV with header p1..pK")
    p.add_argument("--model", help="model.json written by `fit`")
    p.add_argument("--k", type=int, default=3, help="number of classes")


def _load_probs(args, ds):
    if bool(args.probs) == bool(args.model):
        raise ValidationError("give exactly one of --probs or --model")
    if args.probs:
        probs = ingest_probabilities(args.probs, LabelSpace(args.k))
    else:
        model = MultinomialModel.from_dict(json.loads(Path(args.model).read_text()))
        fm = ds.features.select(model.feature_names) if model.feature_names else ds.features
        probs = predict_proba(model, fm)
    if probs.n != ds.n:
        raise ValidationError(f"{probs.n} probability rows for {ds.n} data rows")
    return probs


def _load_thresholds(path):
    return ThresholdVector.from_dict(json.loads(Path(path).read_text()))


def _features(ds, args):
    if getattr(args, "features", None):
        return ds.features.select(tuple(f.strip() for f in args.features.split(",")))
    if getattr(args, "scenario", None):
        return ds.features.select(SCENARIO_MASKS[args.scenario])
    return ds.features


def _write_long(rows, path, keep=None):
    """One row per (method, class, statistic) from single-run rows."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        for r in rows:
            if keep is not None and not keep(r["statistic"]):
                continue
            w.writerow([r["method"], r["class"], r["statistic"]]
                       + ["" if np.isnan(r[c]) else repr(r[c]) for c in ("value", "lo", "hi")]
                       + [r["defined"]])


def cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # Stream layout matches repetition 0 of `pipeline` with the same seed.
    rep = RngSpec(args.seed).child(0)
    cfg = SimConfig(n=args.n, scenario=args.scenario, beta=args.beta, label_mode=args.label_mode,
                    rng=rep.child(0))
    ds = simulate(cfg)
    write_dataset_csv(ds, out / "dataset.csv")
    written = ["dataset.csv"]
    if args.split:
        dev, val = split_cohorts(ds, rep.child(1))
        write_dataset_csv(dev, out / "development.csv")
        write_dataset_csv(val, out / "validation.csv")
        written += ["development.csv", "validation.csv"]
    sidecar = {"settings": _settings(args), "sim": cfg.to_dict(), "files": written,
               "class_counts": ds.class_counts(3).tolist()}
    _dump(sidecar, out / "dataset.json")
    print(f"wrote {', '.join(written)} ({ds.n} rows) to {out}")


def cmd_fit(args):
    ds = read_dataset_csv(args.data)
    ds = ds.with_features(_features(ds, args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fit_rows = ds
    if args.split:
        split = split_development(ds, RngSpec(args.seed), args.k)
        fit_rows = ds.take(split.i1)
        write_dataset_csv(ds.take(split.i2), out / "calibration.csv")
    model = fit_multinomial(fit_rows, _penalty(args), OptConfig(max_iter=args.max_iter), k=args.k)
    _dump(model.to_dict(), out / "model.json")
    _dump(_settings(args), out / "run_config.json")
    meta = model.fit_meta
    print(f"fit {model.k} classes on {fit_rows.n} rows, {model.p} features: "
          f"{meta.iterations} iterations, gradient norm {meta.grad_norm:.3g}")


def cmd_thresholds(args):
    ds = read_dataset_csv(args.data)
    probs = _load_probs(args, ds)
    alpha = np.broadcast_to(np.asarray(args.alpha, dtype=float), (args.k,))
    thr = estimate_thresholds(probs, ds.labels, alpha)
    sets = build_label_sets(probs, thr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = thr.to_dict()
    doc["calibration_coverage"] = class_coverage(sets, ds.labels).tolist()
    _dump(doc, out / "thresholds.json")
    _dump(_settings(args), out / "run_config.json")
    for y in range(args.k):
        print(f"class {y + 1}: t = {thr.t[y]:.4f} (alpha {alpha[y]:g}, "
              f"{thr.calib_counts[y]} calibration rows, coverage {doc['calibration_coverage'][y]:.3f})")


def cmd_classify(args):
    ds = read_dataset_csv(args.data)
    probs = _load_probs(args, ds)
    thr = _load_thresholds(args.thresholds)
    sets = build_label_sets(probs, thr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_probabilities(probs, out / "probabilities.csv")
    naive = argmax_label(probs)
    card = sets.cardinality()
    with (out / "label_sets.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("row", "label_set", "cardinality", "argmax"))
        for i, members in enumerate(sets.to_lists()):
            w.writerow((i, ";".join(map(str, members)), int(card[i]), int(naive[i])))
    prof = ambiguity_profile(sets, ds.labels)
    _dump(prof.to_dict(), out / "ambiguity.json")
    _dump(_settings(args), out / "run_config.json")
    overall, _ = prof.shares()
    print("label-set sizes: " + ", ".join(f"{c}: {overall[c]:.3f}" for c in range(overall.size)))


def _evaluate_rows(args, ds):
    probs = _load_probs(args, ds)
    thr = _load_thresholds(args.thresholds) if args.thresholds else None
    methods = args.methods if thr is not None else tuple(m for m in args.methods if m != "weighted_boot")
    rows = evaluate_probabilities(ds, probs, methods, thr, n_boot=args.n_boot, seed=args.seed,
                                  level=args.level, k=args.k)
    return probs, rows


def cmd_evaluate(args):
    ds = read_dataset_csv(args.data)
    probs, rows = _evaluate_rows(args, ds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    surv = {"surv90", "surv365", "median"}
    _write_long(rows, out / "metrics.csv",
                lambda s: s.replace("bias_", "") not in surv and not s.startswith("card"))
    _write_long(rows, out / "ambiguity.csv", lambda s: s.startswith("card"))
    with (out / "calibration.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("class", "bin", "mean_predicted", "observed_fraction", "count"))
        for y in range(1, args.k + 1):
            for b, (mp, of, cnt) in enumerate(calibration_bins(probs, ds.labels, y, args.bins)):
                w.writerow((y, b, repr(float(mp)), repr(float(of)), int(cnt)))
    _dump(_settings(args), out / "run_config.json")
    for r in rows:
        if r["class"] == "macro" and r["statistic"] == "accuracy":
            print(f"{r['method']}: macro accuracy {r['value']:.4f}")


def cmd_survival(args):
    ds = read_dataset_csv(args.data)
    if ds.survival is None:
        raise ValidationError(f"{args.data} has no time/event columns")
    _, rows = _evaluate_rows(args, ds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    surv = {"surv90", "surv365", "median"}
    _write_long(rows, out / "survival.csv", lambda s: s.replace("bias_", "") in surv)
    _dump(_settings(args), out / "run_config.json")
    for r in rows:
        if r["statistic"] == "median":
            print(f"{r['method']:>13} class {r['class']}: median {r['value']:.1f}")


def _run_config(args, scenario=None):
    n_reps, n_boot = args.n_reps, args.n_boot
    if args.paper_scale:
        n_reps, n_boot = PAPER_SCALE["n_reps"], PAPER_SCALE["n_boot"]
    return RunConfig(scenario=scenario or args.scenario, n=args.n, n_boot=n_boot, n_reps=n_reps,
                     alpha=args.alpha, methods=args.methods, penalty=_penalty(args),
                     label_mode=args.label_mode, beta=args.beta, seed=args.seed,
                     workers=args.workers, level=args.level)


def _progress(label):
    def report(done, total):
        if done == total or done % max(1, total // 10) == 0:
            print(f"{label}: {done}/{total} repetitions", file=sys.stderr)
    return report


def _run_pipeline(cfg, out, formats, quiet):
    report = None
    if cfg.methods:
        report = run_repetitions(cfg, progress=None if quiet else _progress(f"scenario {cfg.scenario}"))
    provenance = cfg.to_dict()
    provenance["backend"] = _backend.BACKEND
    return report, emit_report(report, out, formats, run_config=provenance)


def cmd_pipeline(args):
    cfg = _run_config(args)
    _, written = _run_pipeline(cfg, args.out, args.formats, args.quiet)
    print("wrote " + ", ".join(p.name for p in written) + f" to {args.out}")


TABLE_STATS = ("threshold", "coverage", "accuracy", "sensitivity", "card1", "bias_median")


def cmd_reproduce_tables(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for s in args.scenarios:
        cfg = _run_config(args, scenario=s)
        report, _ = _run_pipeline(cfg, out / f"scenario{s}", args.formats, args.quiet)
        for a in report.aggregates:
            if a["statistic"] in TABLE_STATS:
                lines.append((s, a["method"], a["class"], a["statistic"], a["mean"], a["sd"],
                              a["boot_lo"], a["boot_hi"]))
    with (out / "tables.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scenario", "method", "class", "statistic", "mean", "sd", "boot_lo", "boot_hi"))
        for row in lines:
            w.writerow([x if isinstance(x, (int, str)) else ("" if np.isnan(x) else repr(x)) for x in row])
    print(f"{'scen':>4} {'method':>13} {'class':>5} {'statistic':>12} {'mean':>8}")
    for s, m, c, st, mean, *_ in lines:
        if st in ("threshold", "coverage") or (st == "accuracy" and c == "macro"):
            print(f"{s:>4} {m:>13} {c:>5} {st:>12} {mean:8.3f}")


def _common(p):
    p.add_argument("--config", help="key = value settings file; command-line options win")
    p.add_argument("--seed", type=int, default=20200, help="master seed")
    p.add_argument("--out", default="out", help="output directory")


def _add_run(p):
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--n", type=int, default=2000, help="cohort size per repetition")
    p.add_argument("--n-boot", type=int, default=200, help="bootstrap resamples")
    p.add_argument("--n-reps", type=int, default=200, help="simulation repetitions")
    p.add_argument("--paper-scale", action="store_true", help="1000 repetitions x 500 resamples")
    p.add_argument("--alpha", type=_alpha, default=(0.10,), help="error level, one or one per class")
    p.add_argument("--methods", type=_methods, default=METHODS, help="comma list from " + ",".join(METHODS))
    p.add_argument("--label-mode", choices=("argmax", "categorical_draw"), default="argmax")
    p.add_argument("--beta", type=float, default=0.7, help="class effect on the survival hazard")
    p.add_argument("--workers", type=int, default=1, help="parallel repetition workers")
    p.add_argument("--level", type=float, default=0.95, help="interval level")
    p.add_argument("--formats", type=lambda s: tuple(s.split(",")), default=("csv", "json"))
    p.add_argument("--quiet", action="store_true")
    _add_penalty(p)


def build_parser():
    parser = argparse.ArgumentParser(prog="labelboot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="store_true", help="print version and backend")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="generate one synthetic cohort")
    _common(p)
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--label-mode", choices=("argmax", "categorical_draw"), default="argmax")
    p.add_argument("--beta", type=float, default=0.7)
    p.add_argument("--split", action="store_true", help="also write development/validation halves")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a multinomial logit model")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), help="keep this scenario's columns")
    p.add_argument("--features", help="comma list of columns to keep")
    p.add_argument("--split", action="store_true",
                   help="fit on one stratified half, write the other as calibration.csv")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--max-iter", type=int, default=500)
    _add_penalty(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("thresholds", help="per-class thresholds from calibration rows")
    _common(p)
    _add_probs(p)
    p.add_argument("--alpha", type=_alpha, default=(0.10,))
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("classify", help="label sets for new rows")
    _common(p)
    _add_probs(p)
    p.add_argument("--thresholds", required=True, help="thresholds.json")
    p.set_defaults(func=cmd_classify)

    for name, func, helptext in (("evaluate", cmd_evaluate, "classification metrics with bootstrap intervals"),
                                 ("survival", cmd_survival, "Kaplan-Meier estimates by assigned label")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        _add_probs(p)
        p.add_argument("--thresholds", help="thresholds.json (needed for weighted_boot)")
        p.add_argument("--methods", type=_methods, default=METHODS)
        p.add_argument("--n-boot", type=int, default=200)
        p.add_argument("--level", type=float, default=0.95)
        if name == "evaluate":
            p.add_argument("--bins", type=int, default=20, help="calibration bins per class")
        p.set_defaults(func=func)

    p = sub.add_parser("pipeline", help="repeated simulation for one scenario")
    _common(p)
    _add_run(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("reproduce-tables", help="pipeline over several scenarios plus a summary table")
    _common(p)
    _add_run(p)
    p.add_argument("--scenarios", type=lambda s: [int(x) for x in s.split(",")], default=[1, 2, 3])
    p.set_defaults(func=cmd_reproduce_tables)
    return parser


def _config_defaults(path, subparser):
    cp = configparser.ConfigParser()
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[labelboot]\n" + text
    cp.read_string(text)
    section = cp["labelboot"] if cp.has_section("labelboot") else cp.defaults()
    actions = {a.dest: a for a in subparser._actions}
    values = {}
    for key, raw in section.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise ValidationError(f"{path}: unknown setting {key!r}")
        act = actions[dest]
        if isinstance(act, argparse._StoreTrueAction):
            values[dest] = cp.BOOLEAN_STATES.get(raw.lower(), False)
        elif act.type is not None:
            values[dest] = act.type(raw)
        else:
            values[dest] = raw
    return values


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.version:
        from . import __version__
        print(f"labelboot {__version__} ({_backend.BACKEND} kernels)")
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        if args.config:
            subparser = parser._subparsers._group_actions[0].choices[args.command]
            subparser.set_defaults(**_config_defaults(args.config, subparser))
            args = parser.parse_args(argv)
        args.func(args)
    except LabelbootError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
