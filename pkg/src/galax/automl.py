"""Budgeted model selection over the learner zoo with weighted CV.

The search enumerates (learner, hyperparameter) combinations in a canonical
order -- learner declaration order, then the per-learner grid expanded
lexicographically over alphabetically sorted parameter names -- so results
do not depend on how the caller lists candidates.  Every candidate is scored
by seeded, weight-aware cross-validation; all metrics are oriented so that
higher is better and ties break toward the earliest canonical candidate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import learners
from .errors import (
    FoldDegeneracyError,
    InvalidInputError,
    NoViableModelError,
    TooFewSamplesError,
)
from .hashing import stable_hash
from .learners import LEARNERS, FittedModel, LearnerConfig

REGRESSION_METRICS = ("r2", "neg_rmse")
CLASSIFICATION_METRICS = ("accuracy", "macro_f1")

DEFAULT_GRIDS = {
    "decision_tree": {"max_depth": [3, 6, 10]},
    "random_forest": {"max_features": ["sqrt", 1.0], "n_estimators": [50, 100]},
    "extra_trees": {"max_features": ["sqrt", 1.0], "n_estimators": [50, 100]},
    "gradient_boosted_trees": {
        "learning_rate": [0.1, 0.3],
        "max_depth": [3],
        "n_estimators": [50, 100],
    },
}


@dataclass(frozen=True)
class AutoMLSettings:
    """Search space, budget, and scoring for per-location model selection.

    ``metric`` ``None`` means the task default (r2 for regression, macro_f1
    for classification).  ``budget`` caps the number of scored candidates;
    ``strategy`` is ``"grid"`` (canonical order) or ``"random"``
    (``n_draws`` candidates from a seeded permutation of the grid).
    """

    candidates: tuple = LEARNERS
    grids: dict | None = None
    strategy: str = "grid"
    n_draws: int = 0
    budget: int = 24
    cv_folds: int = 3
    metric: str | None = None
    seed: int = 0
    min_local_samples: int = 20

    def __post_init__(self):
        if self.strategy not in ("grid", "random"):
            raise InvalidInputError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "random" and self.n_draws < 1:
            raise InvalidInputError("random strategy needs n_draws >= 1")
        if self.budget < 1:
            raise InvalidInputError("budget must be >= 1")
        if self.cv_folds < 2:
            raise InvalidInputError("cv_folds must be >= 2")
        if self.min_local_samples < self.cv_folds:
            raise InvalidInputError("min_local_samples must be >= cv_folds")
        unknown = set(self.candidates) - set(LEARNERS)
        if unknown:
            raise InvalidInputError(f"unknown learners: {sorted(unknown)}")
        if self.metric is not None and self.metric not in (
            REGRESSION_METRICS + CLASSIFICATION_METRICS
        ):
            raise InvalidInputError(f"unknown metric {self.metric!r}")


@dataclass
class SearchOutcome:
    best_config: LearnerConfig
    best_score: float
    trials: tuple
    model: FittedModel


def resolve_metric(metric: str | None, task: str) -> str:
    if metric is None:
        return "r2" if task == "regression" else "macro_f1"
    allowed = REGRESSION_METRICS if task == "regression" else CLASSIFICATION_METRICS
    if metric not in allowed:
        raise InvalidInputError(f"metric {metric!r} is not valid for {task}")
    return metric


# ---------------------------------------------------------------------------
# weighted metrics (all oriented higher-is-better)


def weighted_r2(y, yhat, w) -> float:
    """Weighted R^2; by convention 1.0 when the weighted target variance is
    zero and the fit is exact, 0.0 when it is zero and the fit is not."""
    w_sum = w.sum()
    ybar = np.dot(w, y) / w_sum
    sst = np.dot(w, (y - ybar) ** 2)
    sse = np.dot(w, (y - yhat) ** 2)
    if sst == 0.0:
        return 1.0 if sse == 0.0 else 0.0
    return 1.0 - sse / sst


def weighted_neg_rmse(y, yhat, w) -> float:
    return -float(np.sqrt(np.dot(w, (y - yhat) ** 2) / w.sum()))


def weighted_accuracy(y, yhat, w) -> float:
    return float(np.dot(w, (y == yhat).astype(float)) / w.sum())


def weighted_macro_f1(y, yhat, w) -> float:
    """Macro F1 over the classes present in y, with weighted counts.
    Precision of a never-predicted class counts as 0."""
    f1s = []
    for c in np.unique(y):
        tp = float(np.dot(w, ((y == c) & (yhat == c)).astype(float)))
        pred_c = float(np.dot(w, (yhat == c).astype(float)))
        true_c = float(np.dot(w, (y == c).astype(float)))
        precision = tp / pred_c if pred_c > 0 else 0.0
        recall = tp / true_c if true_c > 0 else 0.0
        f1s.append(2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0)
    return float(np.mean(f1s))


_METRIC_FUNCS = {
    "r2": weighted_r2,
    "neg_rmse": weighted_neg_rmse,
    "accuracy": weighted_accuracy,
    "macro_f1": weighted_macro_f1,
}


def metric_function(metric: str):
    """Weighted scorer for a metric name, oriented higher-is-better."""
    if metric not in _METRIC_FUNCS:
        raise InvalidInputError(f"unknown metric {metric!r}")
    return _METRIC_FUNCS[metric]


# ---------------------------------------------------------------------------
# cross-validation


def fold_assignment(n: int, folds: int, seed: int, labels=None) -> np.ndarray:
    """Deterministic fold index per row: seeded shuffle, label-stratified
    (per-class round-robin with a rotating offset) when labels are given."""
    rng = np.random.default_rng(stable_hash(seed, 17))
    fold_of = np.empty(n, dtype=np.int64)
    if labels is None or len(np.unique(labels)) < 2:
        perm = rng.permutation(n)
        fold_of[perm] = np.arange(n) % folds
        return fold_of
    labels = np.asarray(labels)
    offset = 0
    for c in np.unique(labels):
        members = rng.permutation(np.nonzero(labels == c)[0])
        fold_of[members] = (offset + np.arange(members.shape[0])) % folds
        offset = (offset + members.shape[0]) % folds
    return fold_of


def weighted_cv_score(config: LearnerConfig, X, y, weights, folds: int, metric: str,
                      seed: int, task: str = "regression",
                      n_classes: int | None = None) -> float:
    """Seeded k-fold CV score of one configuration, higher is better.

    Per fold: fit on the training rows with their weights, score the held-out
    rows with the weight-aware metric, then average fold scores weighted by
    held-out weight mass.

    Raises
    ------
    FoldDegeneracyError
        If a fold's training part has no positive-weight row, or (for
        classification with a mixed sample) only one class.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    w = np.asarray(weights, dtype=float)
    n = X.shape[0]
    if folds < 2 or n < folds:
        raise FoldDegeneracyError(f"cannot form {folds} folds from {n} rows")
    score_fn = _METRIC_FUNCS[metric]
    labels = y if task == "classification" else None
    n_distinct = len(np.unique(y)) if task == "classification" else 0
    fold_of = fold_assignment(n, folds, seed, labels)

    scores = []
    masses = []
    for k in range(folds):
        test = fold_of == k
        train = ~test
        w_train = w[train]
        if not np.any(w_train > 0):
            raise FoldDegeneracyError(f"fold {k}: no positive-weight training rows")
        if task == "classification" and n_distinct > 1:
            active = np.unique(y[train][w_train > 0])
            if active.shape[0] < 2:
                raise FoldDegeneracyError(f"fold {k}: single-class training part")
        mass = float(w[test].sum())
        if mass == 0.0:
            continue
        model = learners.fit(config, X[train], y[train], w_train, task, n_classes)
        yhat = model.predict(X[test])
        scores.append(score_fn(y[test], yhat, w[test]))
        masses.append(mass)
    if not scores:
        raise FoldDegeneracyError("no fold with positive held-out weight")
    return float(np.dot(scores, masses) / np.sum(masses))


# ---------------------------------------------------------------------------
# search


def canonical_candidates(settings: AutoMLSettings) -> list:
    """(learner, hyperparameters) pairs in canonical order: learner
    declaration order, then the grid expanded lexicographically over
    alphabetically sorted parameter names."""
    out = []
    for learner in LEARNERS:
        if learner not in settings.candidates:
            continue
        grid = DEFAULT_GRIDS[learner]
        if settings.grids and learner in settings.grids:
            grid = settings.grids[learner]
        keys = sorted(grid)
        for combo in itertools.product(*(grid[k] for k in keys)):
            out.append((learner, dict(zip(keys, combo))))
    return out


def search(X, y, weights, task: str, settings: AutoMLSettings,
           n_classes: int | None = None) -> SearchOutcome:
    """Select and refit the best configuration under the evaluation budget.

    A single-class classification sample short-circuits: cross-validation
    cannot rank models there, so the first canonical candidate is fit
    directly and scored 1.0 (its predictions are trivially right).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    w = np.asarray(weights, dtype=float)
    n = X.shape[0]
    if n < settings.min_local_samples:
        raise TooFewSamplesError(
            f"{n} rows < min_local_samples={settings.min_local_samples}"
        )
    metric = resolve_metric(settings.metric, task)
    all_candidates = canonical_candidates(settings)
    if not all_candidates:
        raise InvalidInputError("empty candidate grid")

    if settings.strategy == "random":
        rng = np.random.default_rng(stable_hash(settings.seed, 19))
        order = rng.permutation(len(all_candidates))[: settings.n_draws]
        plan = [(int(ci), all_candidates[ci]) for ci in order]
    else:
        plan = list(enumerate(all_candidates))
    plan = plan[: settings.budget]

    def make_config(canonical_index, learner, hp):
        return LearnerConfig(learner, dict(hp), seed=stable_hash(settings.seed, 23, canonical_index))

    if task == "classification" and len(np.unique(y[w > 0])) == 1:
        ci, (learner, hp) = plan[0]
        config = make_config(ci, learner, hp)
        model = learners.fit(config, X, y, w, task, n_classes)
        return SearchOutcome(config, 1.0, ((config, 1.0),), model)

    trials = []
    best = None  # (score, canonical_index, config)
    for ci, (learner, hp) in plan:
        config = make_config(ci, learner, hp)
        try:
            score = weighted_cv_score(config, X, y, w, settings.cv_folds, metric,
                                      settings.seed, task, n_classes)
        except FoldDegeneracyError:
            if settings.cv_folds > 2:
                try:
                    score = weighted_cv_score(config, X, y, w, 2, metric,
                                              settings.seed, task, n_classes)
                except FoldDegeneracyError:
                    score = -np.inf
            else:
                score = -np.inf
        trials.append((config, score))
        if np.isfinite(score) and (best is None or score > best[0]
                                   or (score == best[0] and ci < best[1])):
            best = (score, ci, config)
    if best is None:
        raise NoViableModelError("all candidate evaluations failed")
    model = learners.fit(best[2], X, y, w, task, n_classes)
    return SearchOutcome(best[2], float(best[0]), tuple(trials), model)
