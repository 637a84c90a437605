"""Per-location weighted AutoML: bandwidth resolution, local fits, SHAP.

The pipeline for ``fit``:

1.  Resolve the spatial bandwidth; if the kernel spec already carries one it
    is used as-is, otherwise the autocorrelation scan ("isa") or the
    leave-focal-out performance search ("performance") supplies it
    ("auto" picks isa for regression, performance for classification).
2.  For every location: build the kernel weight vector, keep rows above the
    weight floor (expanding to the nearest ``min_local_samples`` rows when
    the subset is too small), run the budgeted model search with a
    per-location seed, predict the focal row, and explain that prediction
    against the highest-weight local rows.
3.  Assemble global metrics over the focal predictions.

Every per-location seed is ``stable_hash(master_seed, location)``, so
results are bit-identical for any worker count; location tasks write only
their own result slot.
"""

from __future__ import annotations

import hashlib
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import automl, spatial_stats
from .configs import GalaxConfig
from .errors import (
    BandwidthSearchError,
    EngineError,
    GalaxError,
    InvalidInputError,
    ShapeError,
    TooFewSamplesError,
)
from .explain import explain_local
from .geometry import (
    KernelSpec,
    _haversine,
    adaptive_cutoff,
    as_coords,
    distances_from,
    kernel_row,
    pairwise_distances,
)
from .hashing import stable_hash
from .learners import predict as learner_predict
from .learners import predict_proba
from .results import (
    SCHEMA_VERSION,
    DatasetFingerprint,
    GalaxResults,
    LocalFit,
    classification_metrics,
    regression_metrics,
)

TASKS = ("regression", "classification")


@dataclass
class Dataset:
    """Coordinates, features, and target for one spatial modelling problem.

    Classification targets are integer labels 0..C-1; ``class_labels`` keeps
    the original label names in mapping order (defaults to the stringified
    label indices).
    """

    coords: np.ndarray
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple
    task: str
    class_labels: tuple | None = None

    def __post_init__(self):
        self.coords = as_coords(self.coords)
        self.X = np.ascontiguousarray(self.X, dtype=float)
        n = self.coords.shape[0]
        if self.X.ndim != 2 or self.X.shape[0] != n:
            raise InvalidInputError("X must be (n, d) matching the coordinates")
        if self.X.shape[1] < 1:
            raise InvalidInputError("need at least one feature column")
        if not np.all(np.isfinite(self.X)):
            raise InvalidInputError("X contains non-finite values")
        self.feature_names = tuple(str(s) for s in self.feature_names)
        if len(self.feature_names) != self.X.shape[1]:
            raise InvalidInputError("feature_names length must match X columns")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise InvalidInputError("feature_names must be unique")
        if self.task not in TASKS:
            raise InvalidInputError(f"task must be one of {TASKS}")
        if self.task == "classification":
            self.y = np.asarray(self.y, dtype=np.int64)
            if self.y.shape != (n,):
                raise InvalidInputError("y must be length n")
            if self.y.min() < 0:
                raise InvalidInputError("labels must be >= 0")
            c = int(self.y.max()) + 1
            if c < 2:
                raise InvalidInputError("classification needs at least 2 classes")
            if self.class_labels is None:
                self.class_labels = tuple(str(i) for i in range(c))
            else:
                self.class_labels = tuple(str(s) for s in self.class_labels)
                if len(self.class_labels) != c:
                    raise InvalidInputError("class_labels length must be max(y)+1")
        else:
            self.y = np.asarray(self.y, dtype=float)
            if self.y.shape != (n,) or not np.all(np.isfinite(self.y)):
                raise InvalidInputError("y must be a finite length-n vector")
            self.class_labels = None

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_labels) if self.class_labels else 0

    def fingerprint(self) -> DatasetFingerprint:
        h = hashlib.sha256()
        h.update(self.coords.astype("<f8").tobytes())
        h.update(self.X.astype("<f8").tobytes())
        if self.task == "classification":
            h.update(self.y.astype("<i8").tobytes())
        else:
            h.update(self.y.astype("<f8").tobytes())
        h.update(self.task.encode())
        h.update("\x00".join(self.feature_names).encode())
        if self.class_labels:
            h.update("\x00".join(self.class_labels).encode())
        return DatasetFingerprint(
            rows=self.n,
            n_features=self.d,
            feature_names=self.feature_names,
            content_hash=h.hexdigest(),
        )


# ---------------------------------------------------------------------------
# bandwidth resolution


def _isa_to_kernel(dataset: Dataset, config: GalaxConfig) -> KernelSpec:
    scan = spatial_stats.isa_scan(
        np.asarray(dataset.y, dtype=float), dataset.coords,
        geodesic=config.kernel.geodesic,
    )
    dist = scan.selected_distance
    if config.kernel.fixed:
        return replace(config.kernel, bandwidth=dist)
    d = pairwise_distances(dataset.coords, geodesic=config.kernel.geodesic)
    counts = ((d > 0.0) & (d <= dist)).sum(axis=1)
    k = int(np.floor(np.median(counts) + 0.5))
    lo = max(2, config.automl.min_local_samples)
    hi = dataset.n - 1
    if lo > hi:
        raise TooFewSamplesError(f"cannot satisfy min_local_samples={lo} with n={dataset.n}")
    clamped = min(max(k, lo), hi)
    if clamped != k:
        warnings.warn(f"adaptive k clamped from {k} to {clamped}", stacklevel=2)
    return replace(config.kernel, k=clamped)


def resolve_bandwidth(dataset: Dataset, config: GalaxConfig) -> KernelSpec:
    """Resolved kernel spec: unchanged when preset, otherwise via the
    configured (or task-default) bandwidth method."""
    return _resolve_bandwidth(dataset, config)[0]


def _resolve_bandwidth(dataset: Dataset, config: GalaxConfig):
    if config.kernel.resolved:
        return config.kernel, "preset"
    method = config.bw_method
    if method == "auto":
        method = "isa" if dataset.task == "regression" else "performance"
    if method == "isa":
        return _isa_to_kernel(dataset, config), "isa"
    spec, _ = search_bandwidth_performance(dataset, config)
    return spec, "performance"


def _bandwidth_candidates(dataset: Dataset, config: GalaxConfig, count: int = 8):
    """Log-spaced candidate kernels: k between min_local_samples and n-1
    (adaptive), or distances between the largest nearest-neighbour distance
    and the dataset diameter (fixed)."""
    if config.kernel.fixed:
        d = pairwise_distances(dataset.coords, geodesic=config.kernel.geodesic)
        off = d + np.where(np.eye(dataset.n, dtype=bool), np.inf, 0.0)
        lo = float(off.min(axis=1).max())
        hi = float(d.max())
        if not 0.0 < lo <= hi:
            raise BandwidthSearchError("degenerate geometry for fixed-bandwidth candidates")
        values = np.unique(np.geomspace(lo, hi, count))
        return [replace(config.kernel, bandwidth=float(v)) for v in values]
    lo = max(2, config.automl.min_local_samples)
    hi = dataset.n - 1
    if lo > hi:
        raise BandwidthSearchError(f"cannot satisfy min_local_samples={lo} with n={dataset.n}")
    ks = np.unique(np.round(np.geomspace(lo, hi, count)).astype(int))
    return [replace(config.kernel, k=int(k)) for k in ks]


def search_bandwidth_performance(dataset: Dataset, config: GalaxConfig):
    """Pick the candidate bandwidth whose leave-focal-out predictions score
    best globally; ties go to the smaller bandwidth.

    Returns (resolved KernelSpec, table of (candidate value, score or None)).
    Candidates where any location has no viable model are skipped.
    """
    metric = automl.resolve_metric(config.automl.metric, dataset.task)
    candidates = _bandwidth_candidates(dataset, config)
    table = []
    best = None  # (score, spec)
    for spec in candidates:
        value = spec.bandwidth if spec.fixed else spec.k
        try:
            preds = leave_focal_out_predictions(dataset, config, spec)
        except GalaxError:
            table.append((value, None))
            continue
        score = _global_score(metric, dataset.y, preds)
        table.append((value, score))
        if best is None or score > best[0]:
            best = (score, spec)
    if best is None:
        raise BandwidthSearchError("no bandwidth candidate could be evaluated")
    return best[1], table


def _global_score(metric: str, y, yhat) -> float:
    w = np.ones(len(y))
    return automl.metric_function(metric)(np.asarray(y), np.asarray(yhat), w)


# ---------------------------------------------------------------------------
# local fitting


def _local_subset(dataset: Dataset, config: GalaxConfig, spec: KernelSpec, i: int,
                  exclude_focal: bool):
    """Rows and weights for location i's neighbourhood.

    Rows with kernel weight above the floor are kept; if fewer than
    ``min_local_samples`` remain the subset expands to the nearest rows with
    their kernel weights, raised to the smallest positive normal float where
    the kernel yields 0 (the expansion exists so cross-validation never sees
    fewer usable rows than it needs).  Returns (indices, weights, expanded
    flag, bandwidth used).
    """
    w = kernel_row(i, dataset.coords, spec)
    bandwidth = float(spec.bandwidth) if spec.fixed \
        else adaptive_cutoff(i, dataset.coords, int(spec.k), geodesic=spec.geodesic)
    keep = w > config.weight_floor
    if exclude_focal:
        keep[i] = False
    idx = np.nonzero(keep)[0]
    expanded = False
    need = config.automl.min_local_samples
    if idx.shape[0] < need:
        dist = distances_from(i, dataset.coords, geodesic=spec.geodesic)
        order = np.lexsort((np.arange(dataset.n), dist))
        if exclude_focal:
            order = order[order != i]
        idx = np.sort(order[:need])
        expanded = True
        return idx, np.maximum(w[idx], np.finfo(float).tiny), expanded, bandwidth
    return idx, w[idx], expanded, bandwidth


def _fit_location(dataset: Dataset, config: GalaxConfig, spec: KernelSpec, i: int):
    idx, w_local, expanded, bandwidth = _local_subset(dataset, config, spec, i, False)
    loc_seed = stable_hash(config.master_seed, i)
    settings = replace(config.automl, seed=loc_seed)
    outcome = automl.search(dataset.X[idx], dataset.y[idx], w_local, dataset.task,
                            settings, dataset.n_classes or None)
    x_focal = dataset.X[i]
    if dataset.task == "classification":
        probs = predict_proba(outcome.model, x_focal[None, :])[0]
        prediction = int(np.argmax(probs))
    else:
        probs = None
        prediction = float(learner_predict(outcome.model, x_focal[None, :])[0])

    if config.explain.enabled:
        bg_order = np.lexsort((idx, -w_local))[: config.explain.background_size]
        background = dataset.X[idx[bg_order]]
        expl = explain_local(outcome.model, x_focal, background, dataset.task,
                             config.explain, seed=stable_hash(loc_seed, 3))
        shap = expl.phi
        base_value = expl.base_value
        mode = expl.mode_used
        residual = expl.residual
    else:
        shap = np.zeros(dataset.d)
        base_value = float(probs[prediction]) if probs is not None else prediction
        mode = "disabled"
        residual = 0.0

    lf = LocalFit(
        location=i,
        bandwidth_used=bandwidth,
        effective_n=float(np.sum(w_local)),
        selected=outcome.best_config,
        prediction=prediction,
        probabilities=probs,
        shap=shap,
        base_value=base_value,
        local_score=outcome.best_score,
        expanded=expanded,
        explain_mode=mode,
        explain_residual=residual,
    )
    return lf, outcome.model


def _run_locations(dataset, config, worker):
    """Run ``worker(i)`` for every location with index-addressed results."""
    slots = [None] * dataset.n

    def run(i):
        try:
            slots[i] = (True, worker(i))
        except GalaxError as exc:
            slots[i] = (False, exc)

    if config.threads <= 1:
        for i in range(dataset.n):
            run(i)
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            list(pool.map(run, range(dataset.n)))
    for i, (ok, payload) in enumerate(slots):
        if not ok:
            raise EngineError(f"location {i}: {payload}") from payload
    return [payload for _, payload in slots]


def leave_focal_out_predictions(dataset: Dataset, config: GalaxConfig,
                                spec: KernelSpec) -> np.ndarray:
    """Predict each focal row from a model trained on its neighbourhood with
    the focal row excluded (reduced search budget, explanations off)."""
    settings = replace(config.automl, budget=min(config.automl.budget, 6))

    def worker(i):
        idx, w_local, _, _ = _local_subset(dataset, config, spec, i, True)
        loc_seed = stable_hash(config.master_seed, i)
        outcome = automl.search(dataset.X[idx], dataset.y[idx], w_local, dataset.task,
                                replace(settings, seed=loc_seed), dataset.n_classes or None)
        return learner_predict(outcome.model, dataset.X[i][None, :])[0]

    preds = _run_locations(dataset, config, worker)
    if dataset.task == "classification":
        return np.array(preds, dtype=np.int64)
    return np.array(preds, dtype=float)


def fit(dataset: Dataset, config: GalaxConfig | None = None) -> GalaxResults:
    """Fit the full per-location model collection and assemble results."""
    config = config or GalaxConfig()
    floor_n = max(10, config.automl.min_local_samples)
    if dataset.n < floor_n:
        raise TooFewSamplesError(f"n={dataset.n} < required minimum {floor_n}")
    automl.resolve_metric(config.automl.metric, dataset.task)  # fail fast on mismatch
    spec, method = _resolve_bandwidth(dataset, config)

    pairs = _run_locations(dataset, config, lambda i: _fit_location(dataset, config, spec, i))
    local_fits = tuple(p[0] for p in pairs)
    models = tuple(p[1] for p in pairs)

    if dataset.task == "classification":
        yhat = np.array([lf.prediction for lf in local_fits], dtype=np.int64)
        metrics = classification_metrics(dataset.y, yhat, dataset.n_classes)
    else:
        yhat = np.array([lf.prediction for lf in local_fits])
        metrics = regression_metrics(dataset.y, yhat)

    # thread count is an execution detail, not a model setting: normalize it
    # in the echo so any worker count yields an identical archive
    return GalaxResults(
        schema_version=SCHEMA_VERSION,
        task=dataset.task,
        resolved_kernel=spec,
        bw_method_used=method,
        settings_echo=replace(config, threads=1),
        local_fits=local_fits,
        models=models,
        global_metrics=metrics,
        created_from=dataset.fingerprint(),
        train_coords=dataset.coords.copy(),
        class_labels=dataset.class_labels,
    )


def predict(results: GalaxResults, new_coords, new_X) -> np.ndarray:
    """Score new points with the local model of the nearest training
    location (ties to the lowest index)."""
    new_coords = np.asarray(new_coords, dtype=float)
    if new_coords.ndim != 2 or new_coords.shape[1] != 2 or new_coords.shape[0] < 1:
        raise InvalidInputError("new_coords must be (m, 2) with m >= 1")
    if not np.all(np.isfinite(new_coords)):
        raise InvalidInputError("new_coords contain non-finite values")
    new_X = np.ascontiguousarray(new_X, dtype=float)
    if new_X.ndim != 2 or new_X.shape[0] != new_coords.shape[0]:
        raise ShapeError("new_X must be (m, d) matching new_coords")
    if new_X.shape[1] != results.created_from.n_features:
        raise ShapeError(
            f"expected {results.created_from.n_features} features, got {new_X.shape[1]}"
        )
    geodesic = results.resolved_kernel.geodesic
    train = results.train_coords
    out = np.empty(new_coords.shape[0], dtype=float)
    for i in range(new_coords.shape[0]):
        if geodesic:
            d = _haversine(new_coords[i, 0], new_coords[i, 1], train[:, 0], train[:, 1])
        else:
            delta = train - new_coords[i]
            d = np.hypot(delta[:, 0], delta[:, 1])
        j = int(np.argmin(d))
        out[i] = learner_predict(results.models[j], new_X[i][None, :])[0]
    if results.task == "classification":
        return out.astype(np.int64)
    return out
