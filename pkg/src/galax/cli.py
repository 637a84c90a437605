"""Command-line surface.

Subcommands::

    fit        ingest data, fit the engine, save a .galax archive, print summary
    bandwidth  run the autocorrelation scan or performance search, print a CSV table
    summary    print the report for a saved archive
    explain    print (and optionally chart) one location's SHAP record
    export     write shap / predictions / local-fits CSVs from an archive
    predict    score new points with a saved archive

Exit codes: 0 success, 2 usage error, 3 data validation, 4 engine/model
error, 5 archive error.  Failures print one line to stderr prefixed
``error[CODE]:``.  stdout carries only data and tables.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys

import numpy as np

from . import engine, results as results_mod, spatial_stats
from .automl import AutoMLSettings
from .configs import GalaxConfig
from .dataio import IngestSpec, load_dataset
from .errors import (
    ArchiveError,
    DataValidationError,
    GalaxError,
    LocationRangeError,
)
from .explain import ExplainSettings
from .geometry import KERNEL_FUNCTIONS, KernelSpec
from .svg import shap_bar_chart

_EXIT_USAGE = 2
_EXIT_DATA = 3
_EXIT_ENGINE = 4
_EXIT_ARCHIVE = 5

_EPILOG = """\
exit codes:
  0  success
  2  usage error            (error[E_USAGE])
  3  data validation error  (error[E_DATA])
  4  engine/model error     (error[E_ENGINE], error[E_LOC_RANGE])
  5  archive error          (error[E_ARCHIVE])

environment:
  GALAX_THREADS  default worker count for --threads
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error[E_USAGE]: {message}\n")
        raise SystemExit(_EXIT_USAGE)


def _default_threads() -> int:
    raw = os.environ.get("GALAX_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _add_data_flags(p):
    p.add_argument("--data", required=True, help="CSV or GeoJSON input file")
    p.add_argument("--x", default="x", help="x / longitude column (default: x)")
    p.add_argument("--y", default="y", help="y / latitude column (default: y)")
    p.add_argument("--target", default="target", help="target column (default: target)")
    p.add_argument("--features", default=None,
                   help="comma-separated feature columns (default: all numeric)")
    p.add_argument("--task", choices=("regression", "classification"),
                   default="regression", help="modelling task (default: regression)")
    p.add_argument("--geodesic", action="store_true",
                   help="treat coordinates as lon/lat degrees (default: planar)")


def _add_kernel_flags(p):
    p.add_argument("--kernel", choices=KERNEL_FUNCTIONS, default="bisquare",
                   help="kernel function (default: bisquare)")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--adaptive", action="store_true", default=True,
                      help="adaptive bandwidth: --bw is a neighbour count (default)")
    mode.add_argument("--fixed", dest="adaptive", action="store_false",
                      help="fixed bandwidth: --bw is a distance")
    p.add_argument("--bw", default="auto",
                   help="bandwidth value, or 'auto' to select it (default: auto)")
    p.add_argument("--bw-method", choices=("auto", "isa", "performance"), default="auto",
                   help="automatic bandwidth method (default: auto = isa for "
                        "regression, performance for classification)")


def _add_automl_flags(p):
    p.add_argument("--budget", type=int, default=24,
                   help="max model evaluations per location (default: 24)")
    p.add_argument("--cv-folds", type=int, default=3, help="CV folds (default: 3)")
    p.add_argument("--metric", default=None,
                   choices=("r2", "neg_rmse", "accuracy", "macro_f1"),
                   help="selection metric (default: r2 / macro_f1 by task)")
    p.add_argument("--candidates", default=None,
                   help="comma-separated learner subset (default: all four)")
    p.add_argument("--strategy", choices=("grid", "random"), default="grid",
                   help="search strategy (default: grid)")
    p.add_argument("--n-draws", type=int, default=0,
                   help="candidate draws for --strategy random (default: 0)")
    p.add_argument("--min-local-samples", type=int, default=20,
                   help="minimum rows per local fit (default: 20)")
    p.add_argument("--weight-floor", type=float, default=1e-6,
                   help="drop kernel weights at or below this (default: 1e-6)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: GALAX_THREADS or 1)")


def _build_parser() -> _Parser:
    parser = _Parser(prog="galax",
                     description="Geographically weighted AutoML with Shapley explanations",
                     epilog=_EPILOG,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_fit = sub.add_parser("fit", help="fit the engine and save an archive",
                           epilog=_EPILOG,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_data_flags(p_fit)
    _add_kernel_flags(p_fit)
    _add_automl_flags(p_fit)
    p_fit.add_argument("--explain-mode", choices=("auto", "exact", "sampled"),
                       default="auto", help="Shapley mode (default: auto)")
    p_fit.add_argument("--n-permutations", type=int, default=200,
                       help="permutations in sampled mode (default: 200)")
    p_fit.add_argument("--background-size", type=int, default=64,
                       help="background rows per explanation (default: 64)")
    p_fit.add_argument("--no-explain", action="store_true",
                       help="skip Shapley explanations")
    p_fit.add_argument("--out", required=True, help="output .galax archive path")

    p_bw = sub.add_parser("bandwidth", help="bandwidth scan/search table only")
    _add_data_flags(p_bw)
    _add_kernel_flags(p_bw)
    _add_automl_flags(p_bw)
    p_bw.add_argument("--method", choices=("isa", "performance"), default="isa",
                      help="bandwidth method to run (default: isa)")

    p_sum = sub.add_parser("summary", help="print the report for an archive")
    p_sum.add_argument("archive", help=".galax archive path")

    p_exp = sub.add_parser("explain", help="detailed SHAP record for one location")
    p_exp.add_argument("archive", help=".galax archive path")
    p_exp.add_argument("--location", type=int, required=True, help="location index")
    p_exp.add_argument("--svg", default=None, help="also write a bar chart SVG here")

    p_ex = sub.add_parser("export", help="write result tables as CSV")
    p_ex.add_argument("archive", help=".galax archive path")
    p_ex.add_argument("--what", choices=("shap", "predictions", "local-fits"),
                      required=True, help="which table to export")
    p_ex.add_argument("--out", required=True, help="output CSV path")

    p_pr = sub.add_parser("predict", help="score new points with a saved archive")
    p_pr.add_argument("archive", help=".galax archive path")
    p_pr.add_argument("--data", required=True, help="CSV/GeoJSON with new points")
    p_pr.add_argument("--x", default="x", help="x / longitude column (default: x)")
    p_pr.add_argument("--y", default="y", help="y / latitude column (default: y)")
    return parser


# ---------------------------------------------------------------------------
# subcommand bodies


def _ingest(args) -> engine.Dataset:
    features = tuple(s.strip() for s in args.features.split(",")) if args.features else None
    spec = IngestSpec(path=args.data, x_col=args.x, y_col=args.y,
                      target_col=args.target, feature_cols=features,
                      task=args.task, geodesic=args.geodesic)
    return load_dataset(spec)


def _kernel_from_args(args) -> KernelSpec:
    bandwidth = None
    k = None
    if args.bw != "auto":
        if args.adaptive:
            k = int(float(args.bw))
        else:
            bandwidth = float(args.bw)
    return KernelSpec(function=args.kernel, fixed=not args.adaptive,
                      bandwidth=bandwidth, k=k, geodesic=args.geodesic)


def _config_from_args(args, explain: ExplainSettings) -> GalaxConfig:
    candidates = tuple(s.strip() for s in args.candidates.split(",")) \
        if args.candidates else None
    automl_settings = AutoMLSettings(
        candidates=candidates or AutoMLSettings().candidates,
        strategy=args.strategy,
        n_draws=args.n_draws,
        budget=args.budget,
        cv_folds=args.cv_folds,
        metric=args.metric,
        seed=args.seed,
        min_local_samples=args.min_local_samples,
    )
    threads = args.threads if args.threads is not None else _default_threads()
    return GalaxConfig(
        kernel=_kernel_from_args(args),
        bw_method=args.bw_method,
        automl=automl_settings,
        explain=explain,
        weight_floor=args.weight_floor,
        threads=threads,
        master_seed=args.seed,
    )


def _cmd_fit(args) -> int:
    dataset = _ingest(args)
    explain = ExplainSettings(mode=args.explain_mode,
                              n_permutations=args.n_permutations,
                              background_size=args.background_size,
                              enabled=not args.no_explain)
    config = _config_from_args(args, explain)
    res = engine.fit(dataset, config)
    results_mod.save(res, args.out)
    print(results_mod.summary(res).text)
    sys.stderr.write(f"saved {args.out}\n")
    return 0


def _cmd_bandwidth(args) -> int:
    dataset = _ingest(args)
    config = _config_from_args(args, ExplainSettings(enabled=False))
    writer = csv.writer(sys.stdout, lineterminator="\n")
    if args.method == "isa":
        scan = spatial_stats.isa_scan(
            dataset.y.astype(float), dataset.coords, geodesic=args.geodesic
        )
        writer.writerow(["distance", "moran_i", "expected", "variance", "z", "selected"])
        for band in scan.bands:
            writer.writerow([
                f"{band.distance:.10g}", f"{band.moran.I:.10g}",
                f"{band.moran.expected:.10g}", f"{band.moran.variance:.10g}",
                f"{band.moran.z:.10g}",
                "1" if band.distance == scan.selected_distance else "0",
            ])
        sys.stderr.write(
            f"selected distance {scan.selected_distance:.10g} ({scan.selection_rule})\n"
        )
    else:
        spec, table = engine.search_bandwidth_performance(dataset, config)
        writer.writerow(["candidate", "score", "feasible", "selected"])
        chosen = spec.bandwidth if spec.fixed else spec.k
        for value, score in table:
            writer.writerow([
                f"{value:.10g}",
                "" if score is None else f"{score:.10g}",
                "0" if score is None else "1",
                "1" if value == chosen else "0",
            ])
        sys.stderr.write(f"selected bandwidth {chosen}\n")
    return 0


def _cmd_summary(args) -> int:
    res = results_mod.load(args.archive)
    print(results_mod.summary(res).text)
    return 0


def _cmd_explain(args) -> int:
    res = results_mod.load(args.archive)
    record = results_mod.shap_for_location(res, args.location)
    print(f"location {record['location']}")
    print(f"prediction    {record['prediction']}")
    if "probabilities" in record:
        labels = res.class_labels or ()
        probs = "  ".join(
            f"{labels[c] if c < len(labels) else c}={p:.4f}"
            for c, p in enumerate(record["probabilities"])
        )
        print(f"probabilities {probs}")
    print(f"base value    {record['base_value']:.6g}")
    print(f"target        {record['target']:.6g}")
    print(f"effective n   {record['effective_n']:.2f}")
    print(f"learner       {record['selected']['learner']} "
          f"{results_mod.display_hyperparameters(record['selected']['hyperparameters'])}")
    width = max(len(name) for name, _ in record["contributions"])
    print("contributions (|phi| descending):")
    for name, value in record["contributions"]:
        print(f"  {name:<{width}}  {value:+.6g}")
    if args.svg:
        with open(args.svg, "w", encoding="utf-8") as fh:
            fh.write(shap_bar_chart(record))
        sys.stderr.write(f"wrote {args.svg}\n")
    return 0


def _cmd_export(args) -> int:
    res = results_mod.load(args.archive)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if args.what == "shap":
        writer.writerow(["location", *res.feature_names, "base_value"])
        for lf in res.local_fits:
            writer.writerow([lf.location,
                             *(results_mod.format_float(v) for v in lf.shap),
                             results_mod.format_float(lf.base_value)])
    elif args.what == "predictions":
        if res.task == "classification":
            labels = res.class_labels
            writer.writerow(["location", "prediction", "label",
                             *(f"prob_{c}" for c in range(len(labels)))])
            for lf in res.local_fits:
                writer.writerow([lf.location, int(lf.prediction),
                                 labels[int(lf.prediction)],
                                 *(results_mod.format_float(p) for p in lf.probabilities)])
        else:
            writer.writerow(["location", "prediction"])
            for lf in res.local_fits:
                writer.writerow([lf.location, results_mod.format_float(lf.prediction)])
    else:
        writer.writerow(["location", "bandwidth_used", "effective_n", "learner",
                         "hyperparameters", "prediction", "local_score", "expanded"])
        for lf in res.local_fits:
            writer.writerow([
                lf.location,
                results_mod.format_float(lf.bandwidth_used),
                results_mod.format_float(lf.effective_n),
                lf.selected.learner,
                results_mod.hyperparameters_json(lf.selected.hyperparameters),
                int(lf.prediction) if res.task == "classification"
                else results_mod.format_float(lf.prediction),
                results_mod.format_float(lf.local_score),
                "1" if lf.expanded else "0",
            ])
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
    sys.stderr.write(f"wrote {args.out}\n")
    return 0


def _cmd_predict(args) -> int:
    res = results_mod.load(args.archive)
    spec = IngestSpec(path=args.data, x_col=args.x, y_col=args.y,
                      target_col="__none__", feature_cols=res.feature_names,
                      task="regression", geodesic=res.resolved_kernel.geodesic)
    # new data has no target column; read coordinates and features directly
    new = _load_prediction_frame(spec, res)
    preds = engine.predict(res, new["coords"], new["X"])
    writer = csv.writer(sys.stdout, lineterminator="\n")
    if res.task == "classification":
        writer.writerow(["index", "prediction", "label"])
        for i, p in enumerate(preds):
            writer.writerow([i, int(p), res.class_labels[int(p)]])
    else:
        writer.writerow(["index", "prediction"])
        for i, p in enumerate(preds):
            writer.writerow([i, results_mod.format_float(p)])
    return 0


def _load_prediction_frame(spec: IngestSpec, res) -> dict:
    from .dataio import _column_values

    with open(spec.path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataValidationError("empty CSV file") from None
        rows = [row for row in reader if row]
    if not rows:
        raise DataValidationError("no data rows")
    for col in (spec.x_col, spec.y_col, *res.feature_names):
        if col not in header:
            raise DataValidationError(f"column {col!r} not found in {spec.path}")
    xs = _column_values(rows, header, spec.x_col)
    ys = _column_values(rows, header, spec.y_col)
    X = np.column_stack([_column_values(rows, header, c) for c in res.feature_names])
    return {"coords": np.column_stack([xs, ys]), "X": X}


_COMMANDS = {
    "fit": _cmd_fit,
    "bandwidth": _cmd_bandwidth,
    "summary": _cmd_summary,
    "explain": _cmd_explain,
    "export": _cmd_export,
    "predict": _cmd_predict,
}


def run_cli(argv=None) -> int:
    """Parse arguments, dispatch, and map failures to exit codes."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits for --help (0) and usage errors (2)
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except DataValidationError as exc:
        sys.stderr.write(f"error[E_DATA]: {exc}\n")
        return _EXIT_DATA
    except LocationRangeError as exc:
        sys.stderr.write(f"error[E_LOC_RANGE]: {exc}\n")
        return _EXIT_ENGINE
    except ArchiveError as exc:
        sys.stderr.write(f"error[E_ARCHIVE]: {exc}\n")
        return _EXIT_ARCHIVE
    except GalaxError as exc:
        sys.stderr.write(f"error[E_ENGINE]: {exc}\n")
        return _EXIT_ENGINE
    except OSError as exc:
        sys.stderr.write(f"error[E_DATA]: {exc}\n")
        return _EXIT_DATA


def main() -> None:
    raise SystemExit(run_cli())


if __name__ == "__main__":
    main()
