"""Result records, metrics, summaries, and the portable results archive.

A completed run is a :class:`GalaxResults`: one :class:`LocalFit` and one
fitted model per location, plus global metrics and enough provenance (the
settings echo and a dataset fingerprint) to interpret the run later.

Archive format (``.galax``)
---------------------------

A ZIP container with members in this fixed order:

1.  ``manifest.json``      schema version, task, kernels, settings echo,
                           global metrics, dataset fingerprint
2.  ``coords.csv``         training coordinates (x, y)
3.  ``local_fits.csv``     location, bandwidth_used, effective_n, learner,
                           hyperparameters (canonical JSON), prediction,
                           local_score, expanded, explain_mode,
                           explain_residual
4.  ``shap_values.csv``    n x d, header = feature names
5.  ``base_values.csv``    n x 1
6.  ``probabilities.csv``  n x C (classification runs only)
7.  ``models/<i>.json``    per-location tree tables (node arrays of
                           feature, threshold, left, right, leaf value)

All floats are serialized with 17 significant digits (exact round-trip for
64-bit floats); non-finite floats serialize as JSON ``null``.  ZIP entry
timestamps are pinned to a constant, so identical runs produce
byte-identical archives.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
import zipfile
from dataclasses import dataclass

import numpy as np

from .configs import GalaxConfig
from .errors import (
    IntegrityError,
    InvalidInputError,
    LocationRangeError,
    UnsupportedVersionError,
)
from .geometry import KernelSpec
from .learners import FittedModel, LearnerConfig, Tree

SCHEMA_VERSION = "1.0"
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


# ---------------------------------------------------------------------------
# metrics


def regression_metrics(y, yhat) -> dict:
    """RMSE and R^2.  With an all-equal target, R^2 is undefined: it is
    returned as NaN (with a warning) while RMSE is still computed."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1 or y.shape[0] < 2:
        raise InvalidInputError("y and yhat must be equal-length vectors (n >= 2)")
    rmse = float(np.sqrt(np.mean((y - yhat) ** 2)))
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        warnings.warn("all-equal target: R^2 undefined (NaN)", stacklevel=2)
        return {"r2": float("nan"), "rmse": rmse}
    sse = float(np.sum((y - yhat) ** 2))
    return {"r2": 1.0 - sse / sst, "rmse": rmse}


def classification_metrics(y, yhat, n_classes: int) -> dict:
    """Accuracy, precision, recall, F1.

    Binary tasks report class-1 precision/recall/F1; multiclass reports
    macro averages over all classes, counting never-predicted classes as
    precision 0 (flagged via warning).
    """
    y = np.asarray(y, dtype=np.int64)
    yhat = np.asarray(yhat, dtype=np.int64)
    if y.shape != yhat.shape or y.ndim != 1:
        raise InvalidInputError("y and yhat must be equal-length label vectors")
    if np.any((y < 0) | (y >= n_classes)) or np.any((yhat < 0) | (yhat >= n_classes)):
        raise InvalidInputError(f"labels outside [0, {n_classes})")
    accuracy = float(np.mean(y == yhat))

    def prf(c):
        tp = float(np.sum((y == c) & (yhat == c)))
        pred_c = float(np.sum(yhat == c))
        true_c = float(np.sum(y == c))
        precision = tp / pred_c if pred_c > 0 else 0.0
        recall = tp / true_c if true_c > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return precision, recall, f1, pred_c

    if n_classes == 2:
        precision, recall, f1, _ = prf(1)
    else:
        rows = [prf(c) for c in range(n_classes)]
        missing = [c for c, r in enumerate(rows) if r[3] == 0]
        if missing:
            warnings.warn(f"classes never predicted (precision 0): {missing}", stacklevel=2)
        precision = float(np.mean([r[0] for r in rows]))
        recall = float(np.mean([r[1] for r in rows]))
        f1 = float(np.mean([r[2] for r in rows]))
    return {"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1}


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class DatasetFingerprint:
    rows: int
    n_features: int
    feature_names: tuple
    content_hash: str


@dataclass
class LocalFit:
    """One location's selected model, prediction, and explanation."""

    location: int
    bandwidth_used: float
    effective_n: float
    selected: LearnerConfig
    prediction: float
    probabilities: np.ndarray | None
    shap: np.ndarray
    base_value: float
    local_score: float
    expanded: bool
    explain_mode: str
    explain_residual: float

    @property
    def explained_target(self) -> float:
        """The scalar the Shapley vector explains: the prediction for
        regression, the predicted-class probability for classification."""
        if self.probabilities is None:
            return float(self.prediction)
        return float(self.probabilities[int(self.prediction)])

    def __eq__(self, other):
        if not isinstance(other, LocalFit):
            return NotImplemented
        same_probs = (
            (self.probabilities is None and other.probabilities is None)
            or (
                self.probabilities is not None
                and other.probabilities is not None
                and np.array_equal(self.probabilities, other.probabilities)
            )
        )
        return (
            self.location == other.location
            and self.bandwidth_used == other.bandwidth_used
            and self.effective_n == other.effective_n
            and self.selected == other.selected
            and self.prediction == other.prediction
            and same_probs
            and np.array_equal(self.shap, other.shap)
            and self.base_value == other.base_value
            and self.local_score == other.local_score
            and self.expanded == other.expanded
            and self.explain_mode == other.explain_mode
            and self.explain_residual == other.explain_residual
        )


@dataclass
class GalaxResults:
    """Everything produced by one engine fit."""

    schema_version: str
    task: str
    resolved_kernel: KernelSpec
    bw_method_used: str
    settings_echo: GalaxConfig
    local_fits: tuple
    models: tuple
    global_metrics: dict
    created_from: DatasetFingerprint
    train_coords: np.ndarray
    class_labels: tuple | None

    @property
    def n_locations(self) -> int:
        return len(self.local_fits)

    @property
    def feature_names(self) -> tuple:
        return self.created_from.feature_names

    def __eq__(self, other):
        if not isinstance(other, GalaxResults):
            return NotImplemented

        def metrics_equal(a, b):
            return set(a) == set(b) and all(
                a[k] == b[k] or (np.isnan(a[k]) and np.isnan(b[k])) for k in a
            )

        return (
            self.schema_version == other.schema_version
            and self.task == other.task
            and self.resolved_kernel == other.resolved_kernel
            and self.bw_method_used == other.bw_method_used
            and self.settings_echo == other.settings_echo
            and self.local_fits == other.local_fits
            and len(self.models) == len(other.models)
            and all(a == b for a, b in zip(self.models, other.models))
            and metrics_equal(self.global_metrics, other.global_metrics)
            and self.created_from == other.created_from
            and np.array_equal(self.train_coords, other.train_coords)
            and self.class_labels == other.class_labels
        )


# ---------------------------------------------------------------------------
# summary


@dataclass(frozen=True)
class SummaryReport:
    text: str
    data: dict


def _kernel_line(spec: KernelSpec) -> str:
    mode = f"fixed, bandwidth={spec.bandwidth:g}" if spec.fixed else f"adaptive, k={spec.k}"
    metric = "geodesic" if spec.geodesic else "planar"
    return f"{spec.function} ({mode}), {metric}"


def display_hyperparameters(hp: dict) -> str:
    """Compact alphabetical JSON with shortest-repr floats (display only;
    archives use the 17-digit canonical form)."""
    return json.dumps({k: hp[k] for k in sorted(hp)}, separators=(",", ":"))


def summary(results: GalaxResults) -> SummaryReport:
    """Global and local performance overview plus the selection table."""
    scores = np.array([lf.local_score for lf in results.local_fits])
    selection: dict = {}
    for lf in results.local_fits:
        key = (lf.selected.learner, display_hyperparameters(lf.selected.hyperparameters))
        selection[key] = selection.get(key, 0) + 1
    table = sorted(selection.items(), key=lambda kv: (-kv[1], kv[0]))
    expanded = sum(1 for lf in results.local_fits if lf.expanded)
    data = {
        "task": results.task,
        "locations": results.n_locations,
        "kernel": _kernel_line(results.resolved_kernel),
        "bw_method": results.bw_method_used,
        "global_metrics": dict(results.global_metrics),
        "local_score": {
            "min": float(scores.min()),
            "median": float(np.median(scores)),
            "max": float(scores.max()),
        },
        "learner_selection": [
            {"learner": k[0], "hyperparameters": k[1], "count": c} for k, c in table
        ],
        "expanded_locations": expanded,
    }
    lines = [
        f"GALAX results: {results.task} over {results.n_locations} locations",
        f"kernel: {data['kernel']}",
        f"bandwidth method: {results.bw_method_used}",
        "global metrics: "
        + "  ".join(f"{k}={v:.6g}" for k, v in results.global_metrics.items()),
        "local score (best CV): "
        + "  ".join(f"{k}={v:.6g}" for k, v in data["local_score"].items()),
        f"expanded neighbourhoods: {expanded}",
        "learner selection:",
        f"  {'count':>5}  {'learner':<24} hyperparameters",
    ]
    for (learner, hp), count in table:
        lines.append(f"  {count:>5}  {learner:<24} {hp}")
    return SummaryReport(text="\n".join(lines), data=data)


def shap_for_location(results: GalaxResults, location: int) -> dict:
    """Detailed attribution record for one location, contributions ordered
    by decreasing |phi| (ties keep feature order)."""
    if not 0 <= location < results.n_locations:
        raise LocationRangeError(
            f"location {location} out of range [0, {results.n_locations})"
        )
    lf = results.local_fits[location]
    order = np.argsort(-np.abs(lf.shap), kind="stable")
    record = {
        "location": location,
        "prediction": lf.prediction,
        "base_value": lf.base_value,
        "target": lf.explained_target,
        "effective_n": lf.effective_n,
        "local_score": lf.local_score,
        "selected": {
            "learner": lf.selected.learner,
            "hyperparameters": dict(lf.selected.hyperparameters),
        },
        "contributions": [
            (results.feature_names[j], float(lf.shap[j])) for j in order
        ],
    }
    if lf.probabilities is not None:
        record["probabilities"] = [float(p) for p in lf.probabilities]
    return record


# ---------------------------------------------------------------------------
# canonical serialization helpers


def format_float(x: float) -> str:
    """17-significant-digit decimal form (exact float64 round-trip)."""
    return format(float(x), ".17g")


def canonical_json(obj) -> str:
    """Deterministic compact JSON: dict keys kept in insertion order,
    floats at 17 significant digits, non-finite floats as null."""
    out = io.StringIO()
    _emit(obj, out)
    return out.getvalue()


def _emit(obj, out):
    if obj is None:
        out.write("null")
    elif obj is True:
        out.write("true")
    elif obj is False:
        out.write("false")
    elif isinstance(obj, str):
        out.write(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.write(format_float(obj) if np.isfinite(obj) else "null")
    elif isinstance(obj, dict):
        out.write("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.write(",")
            out.write(json.dumps(str(k)))
            out.write(":")
            _emit(v, out)
        out.write("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.write("[")
        for i, v in enumerate(obj):
            if i:
                out.write(",")
            _emit(v, out)
        out.write("]")
    else:
        raise InvalidInputError(f"cannot serialize {type(obj).__name__}")


def hyperparameters_json(hp: dict) -> str:
    """Canonical (alphabetically keyed) JSON string for a hyperparameter map."""
    return canonical_json({k: hp[k] for k in sorted(hp)})


def _float_or_nan(v):
    return float("nan") if v is None else float(v)


# ---------------------------------------------------------------------------
# archive writing


def _kernel_dict(spec: KernelSpec) -> dict:
    return {
        "function": spec.function,
        "fixed": spec.fixed,
        "bandwidth": spec.bandwidth,
        "k": spec.k,
        "geodesic": spec.geodesic,
    }


def _settings_dict(cfg: GalaxConfig) -> dict:
    auto = cfg.automl
    expl = cfg.explain
    return {
        "kernel": _kernel_dict(cfg.kernel),
        "bw_method": cfg.bw_method,
        "weight_floor": cfg.weight_floor,
        "threads": cfg.threads,
        "master_seed": cfg.master_seed,
        "automl": {
            "candidates": list(auto.candidates),
            "grids": auto.grids,
            "strategy": auto.strategy,
            "n_draws": auto.n_draws,
            "budget": auto.budget,
            "cv_folds": auto.cv_folds,
            "metric": auto.metric,
            "seed": auto.seed,
            "min_local_samples": auto.min_local_samples,
        },
        "explain": {
            "mode": expl.mode,
            "n_permutations": expl.n_permutations,
            "max_exact_features": expl.max_exact_features,
            "background_size": expl.background_size,
            "classification_target": expl.classification_target,
            "enabled": expl.enabled,
        },
    }


def _manifest(results: GalaxResults) -> dict:
    return {
        "schema_version": results.schema_version,
        "task": results.task,
        "bw_method_used": results.bw_method_used,
        "resolved_kernel": _kernel_dict(results.resolved_kernel),
        "settings": _settings_dict(results.settings_echo),
        "global_metrics": dict(results.global_metrics),
        "dataset": {
            "rows": results.created_from.rows,
            "n_features": results.created_from.n_features,
            "feature_names": list(results.created_from.feature_names),
            "content_hash": results.created_from.content_hash,
            "class_labels": list(results.class_labels) if results.class_labels else None,
        },
    }


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _model_dict(model: FittedModel) -> dict:
    trees = []
    for tree in model.trees:
        trees.append(
            {
                "feature": [int(v) for v in tree.feature],
                "threshold": [float(v) for v in tree.threshold],
                "left": [int(v) for v in tree.left],
                "right": [int(v) for v in tree.right],
                "value": tree.value.tolist(),
            }
        )
    return {
        "learner": model.config.learner,
        "hyperparameters": {k: model.config.hyperparameters[k]
                            for k in sorted(model.config.hyperparameters)},
        "seed": model.config.seed,
        "task": model.task,
        "n_features": model.n_features,
        "n_classes": model.n_classes,
        "base_scores": [float(v) for v in model.base_scores],
        "tree_group": [int(v) for v in model.tree_group],
        "trees": trees,
    }


def save(results: GalaxResults, path) -> None:
    """Write a ``.galax`` archive; identical results give identical bytes."""
    n = results.n_locations
    members = [("manifest.json", canonical_json(_manifest(results)))]

    members.append(
        ("coords.csv",
         _csv_text(["x", "y"],
                   [[format_float(x), format_float(y)] for x, y in results.train_coords]))
    )

    fit_rows = []
    for lf in results.local_fits:
        pred = str(int(lf.prediction)) if results.task == "classification" \
            else format_float(lf.prediction)
        fit_rows.append([
            str(lf.location),
            format_float(lf.bandwidth_used),
            format_float(lf.effective_n),
            lf.selected.learner,
            hyperparameters_json(lf.selected.hyperparameters),
            pred,
            format_float(lf.local_score),
            "1" if lf.expanded else "0",
            lf.explain_mode,
            format_float(lf.explain_residual),
        ])
    members.append(
        ("local_fits.csv",
         _csv_text(["location", "bandwidth_used", "effective_n", "learner",
                    "hyperparameters", "prediction", "local_score", "expanded",
                    "explain_mode", "explain_residual"], fit_rows))
    )

    members.append(
        ("shap_values.csv",
         _csv_text(list(results.feature_names),
                   [[format_float(v) for v in lf.shap] for lf in results.local_fits]))
    )
    members.append(
        ("base_values.csv",
         _csv_text(["base_value"],
                   [[format_float(lf.base_value)] for lf in results.local_fits]))
    )
    if results.task == "classification":
        n_classes = len(results.class_labels)
        members.append(
            ("probabilities.csv",
             _csv_text([f"prob_{c}" for c in range(n_classes)],
                       [[format_float(p) for p in lf.probabilities]
                        for lf in results.local_fits]))
        )
    for i in range(n):
        members.append((f"models/{i}.json", canonical_json(_model_dict(results.models[i]))))

    with zipfile.ZipFile(path, "w") as zf:
        for name, text in members:
            info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.create_system = 3
            info.external_attr = 0o644 << 16
            zf.writestr(info, text.encode("utf-8"), compresslevel=6)


# ---------------------------------------------------------------------------
# archive reading


def _read_member(zf, name) -> str:
    try:
        return zf.read(name).decode("utf-8")
    except KeyError:
        raise IntegrityError(name, "missing archive member") from None


def _read_csv(zf, name, expected_rows, expected_cols) -> list:
    rows = list(csv.reader(io.StringIO(_read_member(zf, name))))
    if not rows:
        raise IntegrityError(name, "empty member")
    body = rows[1:]
    if len(body) != expected_rows:
        raise IntegrityError(name, f"expected {expected_rows} rows, found {len(body)}")
    for r in body:
        if len(r) != expected_cols:
            raise IntegrityError(name, f"expected {expected_cols} columns, found {len(r)}")
    return body


def _kernel_from(d: dict) -> KernelSpec:
    return KernelSpec(
        function=d["function"],
        fixed=bool(d["fixed"]),
        bandwidth=None if d["bandwidth"] is None else float(d["bandwidth"]),
        k=None if d["k"] is None else int(d["k"]),
        geodesic=bool(d["geodesic"]),
    )


def _settings_from(d: dict) -> GalaxConfig:
    from .automl import AutoMLSettings
    from .explain import ExplainSettings

    auto = d["automl"]
    expl = d["explain"]
    grids = auto["grids"]
    if grids is not None:
        grids = {k: dict(v) for k, v in grids.items()}
    return GalaxConfig(
        kernel=_kernel_from(d["kernel"]),
        bw_method=d["bw_method"],
        automl=AutoMLSettings(
            candidates=tuple(auto["candidates"]),
            grids=grids,
            strategy=auto["strategy"],
            n_draws=int(auto["n_draws"]),
            budget=int(auto["budget"]),
            cv_folds=int(auto["cv_folds"]),
            metric=auto["metric"],
            seed=int(auto["seed"]),
            min_local_samples=int(auto["min_local_samples"]),
        ),
        explain=ExplainSettings(
            mode=expl["mode"],
            n_permutations=int(expl["n_permutations"]),
            max_exact_features=int(expl["max_exact_features"]),
            background_size=int(expl["background_size"]),
            classification_target=expl["classification_target"],
            enabled=bool(expl["enabled"]),
        ),
        weight_floor=float(d["weight_floor"]),
        threads=int(d["threads"]),
        master_seed=int(d["master_seed"]),
    )


def _model_from(d: dict, name: str) -> FittedModel:
    try:
        trees = [
            Tree(t["feature"], t["threshold"], t["left"], t["right"], t["value"])
            for t in d["trees"]
        ]
        return FittedModel(
            config=LearnerConfig(d["learner"], dict(d["hyperparameters"]), int(d["seed"])),
            task=d["task"],
            n_features=int(d["n_features"]),
            n_classes=int(d["n_classes"]),
            trees=trees,
            tree_group=np.asarray(d["tree_group"], dtype=np.int32),
            base_scores=np.asarray([_float_or_nan(v) for v in d["base_scores"]], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise IntegrityError(name, f"malformed model record: {exc}") from exc


def load(path) -> GalaxResults:
    """Read a ``.galax`` archive back into a value-equal GalaxResults."""
    try:
        zf = zipfile.ZipFile(path, "r")
    except (OSError, zipfile.BadZipFile) as exc:
        raise IntegrityError(str(path), f"not a readable archive: {exc}") from exc
    with zf:
        try:
            manifest = json.loads(_read_member(zf, "manifest.json"))
        except json.JSONDecodeError as exc:
            raise IntegrityError("manifest.json", f"invalid JSON: {exc}") from exc
        version = str(manifest.get("schema_version", ""))
        major = version.split(".", 1)[0]
        if major != SCHEMA_VERSION.split(".", 1)[0]:
            raise UnsupportedVersionError(
                f"archive schema {version!r} unsupported (expected {SCHEMA_VERSION} line)"
            )
        try:
            task = manifest["task"]
            dataset = manifest["dataset"]
            n = int(dataset["rows"])
            d = int(dataset["n_features"])
            feature_names = tuple(dataset["feature_names"])
            class_labels = dataset["class_labels"]
            resolved_kernel = _kernel_from(manifest["resolved_kernel"])
            settings = _settings_from(manifest["settings"])
            global_metrics = {k: _float_or_nan(v) for k, v in manifest["global_metrics"].items()}
            bw_method_used = manifest["bw_method_used"]
        except (KeyError, TypeError, ValueError) as exc:
            raise IntegrityError("manifest.json", f"malformed manifest: {exc}") from exc

        coords = np.array(
            [[float(a), float(b)] for a, b in _read_csv(zf, "coords.csv", n, 2)]
        )
        fit_rows = _read_csv(zf, "local_fits.csv", n, 10)
        shap_rows = _read_csv(zf, "shap_values.csv", n, d)
        base_rows = _read_csv(zf, "base_values.csv", n, 1)
        prob_rows = None
        if task == "classification":
            if class_labels is None:
                raise IntegrityError("manifest.json", "classification without class_labels")
            prob_rows = _read_csv(zf, "probabilities.csv", n, len(class_labels))

        models = []
        for i in range(n):
            name = f"models/{i}.json"
            try:
                record = json.loads(_read_member(zf, name))
            except json.JSONDecodeError as exc:
                raise IntegrityError(name, f"invalid JSON: {exc}") from exc
            models.append(_model_from(record, name))

        local_fits = []
        for i, row in enumerate(fit_rows):
            try:
                location = int(row[0])
                prediction = float(row[5]) if task == "regression" else int(row[5])
                lf = LocalFit(
                    location=location,
                    bandwidth_used=float(row[1]),
                    effective_n=float(row[2]),
                    selected=models[i].config,
                    prediction=prediction,
                    probabilities=(
                        np.array([float(v) for v in prob_rows[i]])
                        if prob_rows is not None else None
                    ),
                    shap=np.array([float(v) for v in shap_rows[i]]),
                    base_value=float(base_rows[i][0]),
                    local_score=float(row[6]),
                    expanded=row[7] == "1",
                    explain_mode=row[8],
                    explain_residual=float(row[9]),
                )
            except ValueError as exc:
                raise IntegrityError("local_fits.csv", f"row {i}: {exc}") from exc
            if location != i or row[3] != models[i].config.learner:
                raise IntegrityError("local_fits.csv", f"row {i} inconsistent with models/{i}.json")
            local_fits.append(lf)

    return GalaxResults(
        schema_version=version,
        task=task,
        resolved_kernel=resolved_kernel,
        bw_method_used=bw_method_used,
        settings_echo=settings,
        local_fits=tuple(local_fits),
        models=tuple(models),
        global_metrics=global_metrics,
        created_from=DatasetFingerprint(
            rows=n, n_features=d, feature_names=feature_names,
            content_hash=dataset["content_hash"],
        ),
        train_coords=coords,
        class_labels=tuple(class_labels) if class_labels else None,
    )
