"""Command-line front end: synth, fit, score, eval, verify.

Exit codes: 0 success, 1 usage or invalid parameters, 2 data or file
errors, 3 a verification check failed.

Every JSON artifact carries a ``run_config`` block with the fully resolved
parameters. Values that change between identical runs (wall time, thread
count) live only under the ``runtime`` key, so everything else is
byte-identical across repeated runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import persist, theory
from .datasets import (
    DataError,
    HypercubeSpec,
    ScalerParams,
    gen_noise,
    gen_shape_cloud,
    gen_tabular,
    gen_uniform_hypercube,
    load_csv,
    minmax_scale,
    save_csv,
    shuffle_labels,
)
from .embedding import aphd_batched
from .forest import PRESETS, ForestConfig, fit
from .metrics import format_percent, format_table, report, threshold_counts

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3

SYNTH_KINDS = ("hypercube", "gaussian", "uniform", "circles", "lines", "squares", "tabular")
CHECKS = ("lemma1", "thm1", "thm2", "thm3", "thm4", "dimension-trend", "size-trend")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _run_config(args, **resolved) -> dict:
    """Echo of the command line plus any resolved settings."""
    raw = {k: v for k, v in vars(args).items() if k not in ("func", "jobs")}
    raw.update(resolved)
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(raw.items())}


def _label_column(value):
    if value is None:
        return None
    return int(value) if value.lstrip("-").isdigit() else value


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    kind = args.kind
    n = args.n if args.n is not None else 2
    if kind == "hypercube":
        mode = args.mode or ("test" if args.a2 is not None else "train")
        a2 = args.a2 if args.a2 is not None else args.a1
        spec = HypercubeSpec(n=n, a1=args.a1, b1=args.b1, a2=a2, count=args.count,
                             seed=args.seed, grid=args.grid)
        d = gen_uniform_hypercube(spec, mode)
    elif kind in ("gaussian", "uniform"):
        d = gen_noise(n, args.count, kind, tuple(args.clip) if args.clip else None, args.seed)
    elif kind in ("circles", "lines", "squares"):
        d = gen_shape_cloud(kind, n, args.count, args.noise_sigma, args.seed)
    else:
        d = gen_tabular(args.count, n_features=args.n or 8, n_classes=args.classes, seed=args.seed)
    save_csv(d, args.out)
    print(f"wrote {d.n_samples} rows x {d.n_features} features to {args.out}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def _forest_config(args) -> ForestConfig:
    base = dict(PRESETS[args.preset])
    if args.n_estimators is not None:
        base["n_estimators"] = args.n_estimators
    if args.min_samples_leaf is not None:
        base["min_samples_leaf"] = args.min_samples_leaf
    mf = args.max_features
    max_features = mf if mf in ("sqrt", "all") else int(mf)
    return ForestConfig(max_features=max_features, bootstrap=not args.no_bootstrap,
                        class_weight=args.class_weight, seed=args.seed, **base)


def cmd_fit(args) -> int:
    if args.label_column is None:
        raise DataError("fit needs --label-column to know which column holds the classes")
    d = load_csv(args.train, _label_column(args.label_column), has_header=not args.no_header)
    if args.shuffle_labels:
        d = shuffle_labels(d, args.seed)
    scaler = None
    if args.scale:
        d, scaler = minmax_scale(d)
    cfg = _forest_config(args)
    t0 = time.perf_counter()
    m = fit(d, cfg, n_jobs=args.jobs)
    wall = time.perf_counter() - t0
    persist.save(m, args.out)
    leaves = m.leaf_counts()
    summary = {
        "run_config": _run_config(args, forest=cfg.to_dict()),
        "model_fingerprint": m.fingerprint(),
        "n_estimators": m.n_estimators,
        "n_features": m.n_features,
        "class_count": m.class_count,
        "class_names": d.class_names,
        "train_rows": d.n_samples,
        "mean_leaf_count": float(leaves.mean()),
        "leaf_counts": leaves.tolist(),
        "scaler": scaler.to_dict() if scaler is not None else None,
        "runtime": {"wall_seconds": wall, "timestamp": time.time(), "jobs": args.jobs},
    }
    summary_path = args.summary or f"{args.out}.summary.json"
    _write_json(summary, summary_path)
    print(f"fitted {m.n_estimators} trees, mean {leaves.mean():.1f} leaves; "
          f"model {args.out}, summary {summary_path}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# score


def _load_scaler(path) -> ScalerParams:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if "scaler" in obj:
        obj = obj["scaler"]
    if not obj:
        raise DataError(f"{path}: no scaler parameters (was the model fitted with --scale?)")
    return ScalerParams.from_dict(obj)


def cmd_score(args) -> int:
    m = persist.load(args.model)
    d = load_csv(args.data, _label_column(args.label_column), has_header=not args.no_header)
    if d.n_features != m.n_features:
        raise DataError(f"model expects {m.n_features} features but {args.data} has {d.n_features}")
    if args.scaler:
        d = _load_scaler(args.scaler).transform(d)
    t0 = time.perf_counter()
    s = aphd_batched(m, d, args.batch_size, args.repeats, args.seed)
    wall = time.perf_counter() - t0
    with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index", "repeat", "aphd"])
        for i, r, v in zip(s.sample_index, s.repeat, s.aphd):
            w.writerow([int(i), int(r), repr(float(v))])
    meta = {
        "run_config": _run_config(args),
        "model_fingerprint": m.fingerprint(),
        "rows_in_data": d.n_samples,
        "scores_written": len(s),
        "mean_aphd": float(s.aphd.mean()),
        "runtime": {"wall_seconds": wall, "timestamp": time.time()},
    }
    _write_json(meta, args.meta or f"{args.out}.meta.json")
    print(f"wrote {len(s)} scores to {args.out}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def read_scores(path) -> np.ndarray:
    """APHD values from a score CSV (``aphd`` column) or a bare one-column file."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty score file")
    col = 0
    if "aphd" in [c.strip() for c in rows[0]]:
        col = [c.strip() for c in rows[0]].index("aphd")
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: score file has a header but no scores")
    out = np.empty(len(rows))
    for i, r in enumerate(rows):
        try:
            out[i] = float(r[col])
        except (ValueError, IndexError):
            raise DataError(f"{path}: row {i + 1}: no numeric score in column {col}") from None
    return out


def cmd_eval(args) -> int:
    pos = read_scores(args.pos)
    neg = read_scores(args.neg)
    rep = report(pos, neg)
    out = {"run_config": _run_config(args), "report": rep.to_dict()}
    if args.threshold is not None:
        out["threshold"] = threshold_counts(pos, neg, args.threshold)
    _write_json(out, args.out)
    table = format_table([(args.name or Path(args.neg).stem, rep)])
    if args.threshold is not None:
        c = out["threshold"]
        table += (f"\nthreshold {args.threshold:g}: tp={c['tp']} fn={c['fn']} "
                  f"fp={c['fp']} tn={c['tn']} (tpr {format_percent(c['tp'] / rep.pos_count)}%)")
    print(table, file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _run_check(args) -> list:
    c = args.check
    seed = args.seed
    if c == "lemma1":
        if args.model:
            m = persist.load(args.model)
            if args.probes:
                probes = load_csv(args.probes, has_header=not args.no_header).features
            else:
                probes = np.random.default_rng(seed).uniform(-0.2, 1.2, (200, m.n_features))
            return [theory.verify_lemma1(m, probes, seed=seed, n_pairs=args.pairs)]
        fixture = theory.verify_lemma1(theory.xor_forest(seed=seed), theory.XOR_POINTS, seed=seed)
        fixture.name = "lemma1-xor"
        return [fixture, theory.verify_lemma1_random(args.forests, args.pairs, seed)]
    if c == "thm1":
        return [theory.verify_thm1(args.n or 2, args.a1, args.b1,
                                   args.train_count or 2000, seed)]
    if c == "thm2":
        return [theory.verify_thm2(k, args.samples_per_region, args.trials, seed,
                                   test_draws=args.test_draws) for k in args.K or [4]]
    if c == "thm3":
        a2 = args.a2 or [args.a1, (args.a1 + args.b1) / 2, args.b1]
        reports = []
        for n in args.n_list or [args.n or 1]:
            kw = {"train_count": args.train_count} if args.train_count else {}
            reports.extend(theory.verify_thm3(n, args.a1, args.b1, list(a2),
                                              n_estimators=args.trees or 100, seed=seed, **kw))
        return reports
    if c == "thm4":
        kw = {"train_count": args.train_count} if args.train_count else {}
        a2 = args.a2[0] if args.a2 else (args.a1 + args.b1) / 2
        return [theory.verify_thm4(args.n or 2, args.a1, args.b1, a2,
                                   args.L or (50, 200), args.t or (0.1, 0.2), seed, **kw)]
    if c == "dimension-trend":
        return [theory.verify_dimension_trend(seed=seed)]
    return [theory.verify_size_trend(seed=seed)]


def cmd_verify(args) -> int:
    reports = _run_check(args)
    payload = [dict(r.to_dict(), run_config=_run_config(args)) for r in reports]
    _write_json(payload, args.out)
    stream = sys.stderr if args.out in (None, "-") else sys.stdout
    for r in reports:
        print(r.line(), file=stream)
        for w in r.warnings:
            print(f"    warning: {w}", file=stream)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tood", description="Tree-embedding OOD detection toolkit.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    s.add_argument("--kind", required=True, choices=SYNTH_KINDS)
    s.add_argument("--n", type=int, help="dimension (default 2; 8 for tabular)")
    s.add_argument("--a1", type=float, default=0.0)
    s.add_argument("--b1", type=float, default=1.0)
    s.add_argument("--a2", type=float, help="test-cube shift; implies --mode test")
    s.add_argument("--mode", choices=("train", "test"))
    s.add_argument("--grid", type=int, default=8, help="checkerboard cells per axis")
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--noise-sigma", type=float, default=0.05)
    s.add_argument("--clip", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--classes", type=int, default=3, help="classes for tabular")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    f = sub.add_parser("fit", help="fit a forest on a labeled CSV")
    f.add_argument("--train", required=True)
    f.add_argument("--label-column", help="header name or 0-based index")
    f.add_argument("--no-header", action="store_true")
    f.add_argument("--preset", choices=tuple(PRESETS), default="tabular")
    f.add_argument("--n-estimators", type=int)
    f.add_argument("--min-samples-leaf", type=int)
    f.add_argument("--max-features", default="sqrt", help="sqrt, all or an integer")
    f.add_argument("--no-bootstrap", action="store_true")
    f.add_argument("--class-weight", choices=("balanced", "uniform"), default="balanced")
    f.add_argument("--shuffle-labels", action="store_true")
    f.add_argument("--scale", action="store_true", help="min-max scale; parameters go to the summary")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--jobs", type=int, help="threads (outputs do not depend on it)")
    f.add_argument("--out", required=True)
    f.add_argument("--summary", help="summary JSON path (default OUT.summary.json)")
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("score", help="APHD scores for a feature CSV")
    c.add_argument("--model", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--label-column", help="column to drop before scoring")
    c.add_argument("--no-header", action="store_true")
    c.add_argument("--scaler", help="fit summary or scaler JSON to apply first")
    c.add_argument("--batch-size", type=int, default=500)
    c.add_argument("--repeats", type=int, default=10)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.add_argument("--meta", help="sidecar JSON path (default OUT.meta.json)")
    c.set_defaults(func=cmd_score)

    e = sub.add_parser("eval", help="AUROC/AUPR/FPR of two score files")
    e.add_argument("--pos", required=True, help="in-distribution scores")
    e.add_argument("--neg", required=True, help="OOD scores")
    e.add_argument("--threshold", type=float)
    e.add_argument("--name", help="row label in the table")
    e.add_argument("--out", default="-", help="report JSON path (default stdout)")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="Monte-Carlo checks of the distance results")
    v.add_argument("check", choices=CHECKS)
    v.add_argument("--n", type=int)
    v.add_argument("--n-list", type=int, nargs="+", help="several dimensions (thm3)")
    v.add_argument("--a1", type=float, default=0.0)
    v.add_argument("--b1", type=float, default=1.0)
    v.add_argument("--a2", type=float, nargs="+")
    v.add_argument("--K", type=int, nargs="+")
    v.add_argument("--samples-per-region", type=int, default=20)
    v.add_argument("--trials", type=int, default=1)
    v.add_argument("--test-draws", type=int, default=10_000)
    v.add_argument("--train-count", type=int)
    v.add_argument("--trees", type=int)
    v.add_argument("--L", type=int, nargs="+")
    v.add_argument("--t", type=float, nargs="+")
    v.add_argument("--forests", type=int, default=10)
    v.add_argument("--pairs", type=int, default=1000, help="lemma1: probe pairs per forest")
    v.add_argument("--model", help="lemma1: check this model instead of the fixtures")
    v.add_argument("--probes", help="lemma1: probe CSV for --model")
    v.add_argument("--no-header", action="store_true")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default="-", help="report JSON path (default stdout)")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return args.func(args)
    except (DataError, persist.ModelFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
