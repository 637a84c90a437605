"""Tree-based learners with per-sample weights, built on flat node arrays.

Four learners share one CART-style grower (see ``_tree_kernels``):

- ``decision_tree``: greedy axis-aligned splits, midpoint thresholds over
  sorted distinct feature values.
- ``random_forest``: weighted bootstrap per tree (rows drawn with
  probability proportional to weight, drawn rows counting with weight 1),
  per-split feature subsampling, averaged predictions.
- ``extra_trees``: full sample, one uniform-random threshold per candidate
  feature, per-split feature subsampling.
- ``gradient_boosted_trees``: squared-loss boosting from the weighted mean
  (regression) or binomial log-loss from base log-odds (binary);
  multiclass is one-vs-rest.  Stage trees fit weighted negative gradients
  and their leaves are pre-scaled by the learning rate, so prediction is
  ``base + sum(tree outputs)``.

Split quality is the weighted impurity decrease: variance for regression,
Gini for classification.  Ties break toward the lowest feature index, then
the lowest threshold.

Rows with zero weight are dropped before any seeded draw, which makes
"zero weight" exactly equivalent to "row absent".  Remaining weights are
rescaled to max 1; every criterion is weight-ratio based, so any positive
rescaling of the weights leaves fits unchanged.

Determinism: ``LearnerConfig.seed`` drives every draw (bootstrap indices,
feature subsets, random thresholds, subsample rows) through SplitMix64
streams keyed with ``stable_hash``, so refits are bit-identical across
runs and thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._tree_kernels import HAVE_NUMBA, apply_tree, grow_tree
from .errors import EmptyTrainingSetError, InvalidInputError, ShapeError
from .hashing import mix64, stable_hash

LEARNERS = ("decision_tree", "random_forest", "extra_trees", "gradient_boosted_trees")

HYPERPARAMETER_DEFAULTS = {
    "max_depth": None,
    "min_samples_leaf": 1,
    "n_estimators": 100,
    "max_features": 1.0,
    "learning_rate": 0.1,
    "subsample": 1.0,
}

_MAX_DEPTH_CAP = 64
_PROB_CLIP = 1e-12


@dataclass(frozen=True)
class LearnerConfig:
    """A learner name, its hyperparameters, and the seed for all randomness.

    Hyperparameters not meaningful for the learner are ignored; missing ones
    take ``HYPERPARAMETER_DEFAULTS``.
    """

    learner: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.learner not in LEARNERS:
            raise InvalidInputError(f"unknown learner {self.learner!r}")
        unknown = set(self.hyperparameters) - set(HYPERPARAMETER_DEFAULTS)
        if unknown:
            raise InvalidInputError(f"unknown hyperparameters: {sorted(unknown)}")

    def resolved_hyperparameters(self) -> dict:
        return {**HYPERPARAMETER_DEFAULTS, **self.hyperparameters}


class Tree:
    """Flat node arrays: feature (-1 at leaves), threshold, left, right, value.

    ``value`` has shape (n_nodes,) for scalar leaves or (n_nodes, n_classes)
    for class-probability leaves.  Rows go left when x[feature] <= threshold.
    """

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.ascontiguousarray(feature, dtype=np.int32)
        self.threshold = np.ascontiguousarray(threshold, dtype=float)
        self.left = np.ascontiguousarray(left, dtype=np.int32)
        self.right = np.ascontiguousarray(right, dtype=np.int32)
        self.value = np.ascontiguousarray(value, dtype=float)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf value for every row of X."""
        X = np.ascontiguousarray(X, dtype=float)
        leaves = apply_tree(self.feature, self.threshold, self.left, self.right, X)
        return self.value[leaves]

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return (
            np.array_equal(self.feature, other.feature)
            and np.array_equal(self.threshold, other.threshold)
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.value, other.value)
        )


@dataclass
class FittedModel:
    """An immutable fitted ensemble.

    ``tree_group`` assigns each tree to an output group: always 0 except for
    one-vs-rest boosted multiclass models, where it is the class index.
    ``base_scores`` is empty for non-boosted models, length 1 for boosted
    regression/binary (mean / log-odds), length C for one-vs-rest.
    """

    config: LearnerConfig
    task: str
    n_features: int
    n_classes: int
    trees: list
    tree_group: np.ndarray
    base_scores: np.ndarray

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba(self, X)

    def __eq__(self, other):
        if not isinstance(other, FittedModel):
            return NotImplemented
        return (
            self.config == other.config
            and self.task == other.task
            and self.n_features == other.n_features
            and self.n_classes == other.n_classes
            and len(self.trees) == len(other.trees)
            and all(a == b for a, b in zip(self.trees, other.trees))
            and np.array_equal(self.tree_group, other.tree_group)
            and np.array_equal(self.base_scores, other.base_scores)
        )


# ---------------------------------------------------------------------------
# growing


def _kernel_seed(seed: int):
    # numba wants uint64; the Python fallback wants a masked int
    return np.uint64(seed) if HAVE_NUMBA else int(seed) & 0xFFFFFFFFFFFFFFFF


def _grown(X, y_real, y_lab, w, *, n_classes, max_depth, min_leaf, n_feat,
           random_thresholds, bootstrap, seed) -> Tree:
    feat, thr, left, right, value = grow_tree(
        X, y_real, y_lab, w,
        n_classes, max_depth, min_leaf, n_feat,
        random_thresholds, bootstrap, _kernel_seed(seed),
    )
    if n_classes == 0:
        value = value[:, 0]
    return Tree(feat, thr, left, right, value)


def _u01(seed: int, i: int) -> float:
    return mix64(stable_hash(seed, i)) * (1.0 / 2.0**64)


def _subsample_rows(m: int, take: int, seed: int) -> np.ndarray:
    """Seeded draw of ``take`` distinct rows (sorted), backend-independent."""
    pool = list(range(m))
    for i in range(take):
        j = i + int(_u01(seed, i) * (m - i))
        pool[i], pool[j] = pool[j], pool[i]
    return np.array(sorted(pool[:take]), dtype=np.int64)


def _n_candidate_features(max_features, d):
    if max_features == "sqrt":
        return max(1, int(round(np.sqrt(d))))
    frac = float(max_features)
    if not 0.0 < frac <= 1.0:
        raise InvalidInputError(f"max_features must be 'sqrt' or in (0, 1], got {max_features}")
    return max(1, int(round(frac * d)))


def _validated_params(config, d):
    hp = config.resolved_hyperparameters()
    max_depth = hp["max_depth"]
    if max_depth is None:
        max_depth = _MAX_DEPTH_CAP
    max_depth = int(max_depth)
    min_leaf = int(hp["min_samples_leaf"])
    n_estimators = int(hp["n_estimators"])
    lr = float(hp["learning_rate"])
    subsample = float(hp["subsample"])
    if max_depth < 1:
        raise InvalidInputError("max_depth must be >= 1")
    if min_leaf < 1:
        raise InvalidInputError("min_samples_leaf must be >= 1")
    if config.learner == "gradient_boosted_trees":
        if n_estimators < 0:
            raise InvalidInputError("n_estimators must be >= 0")
        if not 0.0 < lr <= 1.0:
            raise InvalidInputError("learning_rate must be in (0, 1]")
        if not 0.0 < subsample <= 1.0:
            raise InvalidInputError("subsample must be in (0, 1]")
    elif config.learner in ("random_forest", "extra_trees") and n_estimators < 1:
        raise InvalidInputError("n_estimators must be >= 1")
    n_feat = _n_candidate_features(hp["max_features"], d)
    return max_depth, min_leaf, n_estimators, n_feat, lr, subsample


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _boost(X, target, w, seed, tag, max_depth, min_leaf, n_estimators, lr, subsample,
           link):
    """Gradient boosting loop shared by regression (identity link) and
    binary classification (sigmoid link on 0/1 targets)."""
    m = X.shape[0]
    if link == "identity":
        base = float(np.dot(w, target) / w.sum())
    else:
        p0 = float(np.dot(w, target) / w.sum())
        p0 = min(max(p0, _PROB_CLIP), 1.0 - _PROB_CLIP)
        base = float(np.log(p0 / (1.0 - p0)))
    scores = np.full(m, base)
    trees = []
    for stage in range(n_estimators):
        residual = target - (scores if link == "identity" else _sigmoid(scores))
        if subsample < 1.0:
            take = max(1, int(np.ceil(subsample * m)))
            rows = _subsample_rows(m, take, stable_hash(seed, tag, stage, 11))
        else:
            rows = slice(None)
        Xr = np.ascontiguousarray(X[rows])
        tree = _grown(
            Xr, residual[rows], np.zeros(Xr.shape[0], dtype=np.int64), w[rows],
            n_classes=0, max_depth=max_depth, min_leaf=min_leaf, n_feat=X.shape[1],
            random_thresholds=False, bootstrap=False,
            seed=stable_hash(seed, tag, stage),
        )
        tree.value *= lr
        scores = scores + tree.apply(X)
        trees.append(tree)
    return base, trees


def fit(config: LearnerConfig, X, y, sample_weights=None, task: str = "regression",
        n_classes: int | None = None) -> FittedModel:
    """Fit a learner on (X, y) with optional per-sample weights.

    Classification labels must be integers in [0, n_classes); ``n_classes``
    defaults to ``max(y) + 1``.  Rows with zero weight are equivalent to
    absent rows.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y_in = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y_in.shape[0]:
        raise InvalidInputError("X must be (n, d) with matching y length")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("X contains non-finite values")
    if task not in ("regression", "classification"):
        raise InvalidInputError(f"unknown task {task!r}")
    n, d = X.shape
    if sample_weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(sample_weights, dtype=float)
        if w.shape != (n,) or not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidInputError("sample weights must be finite, >= 0, length n")
    if not np.any(w > 0):
        raise EmptyTrainingSetError("all sample weights are zero")

    keep = w > 0
    X = np.ascontiguousarray(X[keep])
    w = w[keep]
    w = w / w.max()

    if task == "classification":
        y_lab = y_in[keep].astype(np.int64)
        if np.any(y_lab < 0):
            raise InvalidInputError("classification labels must be >= 0")
        C = int(y_lab.max()) + 1 if n_classes is None else int(n_classes)
        if np.any(y_lab >= C):
            raise InvalidInputError(f"labels exceed n_classes={C}")
        y_real = y_lab.astype(float)
    else:
        y_real = y_in[keep].astype(float)
        if not np.all(np.isfinite(y_real)):
            raise InvalidInputError("y contains non-finite values")
        y_lab = np.zeros(y_real.shape[0], dtype=np.int64)
        C = 0

    max_depth, min_leaf, n_estimators, n_feat, lr, subsample = _validated_params(config, d)
    seed = config.seed

    if config.learner == "decision_tree":
        tree = _grown(X, y_real, y_lab, w, n_classes=C, max_depth=max_depth,
                      min_leaf=min_leaf, n_feat=d, random_thresholds=False,
                      bootstrap=False, seed=stable_hash(seed, 1))
        trees, groups, base = [tree], np.zeros(1, dtype=np.int32), np.empty(0)

    elif config.learner in ("random_forest", "extra_trees"):
        bootstrap = config.learner == "random_forest"
        trees = [
            _grown(X, y_real, y_lab, w, n_classes=C, max_depth=max_depth,
                   min_leaf=min_leaf, n_feat=n_feat, random_thresholds=not bootstrap,
                   bootstrap=bootstrap, seed=stable_hash(seed, 2, t))
            for t in range(n_estimators)
        ]
        groups, base = np.zeros(len(trees), dtype=np.int32), np.empty(0)

    else:  # gradient_boosted_trees
        if task == "regression":
            base_val, trees = _boost(X, y_real, w, seed, 3, max_depth, min_leaf,
                                     n_estimators, lr, subsample, link="identity")
            groups = np.zeros(len(trees), dtype=np.int32)
            base = np.array([base_val])
        elif C == 2:
            base_val, trees = _boost(X, (y_lab == 1).astype(float), w, seed, 3,
                                     max_depth, min_leaf, n_estimators, lr, subsample,
                                     link="sigmoid")
            groups = np.zeros(len(trees), dtype=np.int32)
            base = np.array([base_val])
        else:
            trees, group_list, bases = [], [], []
            for c in range(C):
                base_c, trees_c = _boost(X, (y_lab == c).astype(float), w, seed,
                                         stable_hash(4, c), max_depth, min_leaf,
                                         n_estimators, lr, subsample, link="sigmoid")
                trees.extend(trees_c)
                group_list.extend([c] * len(trees_c))
                bases.append(base_c)
            groups = np.array(group_list, dtype=np.int32)
            base = np.array(bases)

    return FittedModel(config=config, task=task, n_features=d, n_classes=C,
                       trees=trees, tree_group=groups, base_scores=base)


# ---------------------------------------------------------------------------
# prediction


def _check_X(model, X):
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ShapeError(f"expected (m, {model.n_features}) features, got {X.shape}")
    return X


def _raw_scores(model, X):
    """Boosted additive scores per group: (m, n_groups)."""
    n_groups = model.base_scores.shape[0]
    out = np.tile(model.base_scores, (X.shape[0], 1))
    for tree, g in zip(model.trees, model.tree_group):
        out[:, g] += tree.apply(X)
    return out


def predict_proba(model: FittedModel, X) -> np.ndarray:
    """Class probabilities, shape (m, n_classes)."""
    if model.task != "classification":
        raise InvalidInputError("predict_proba requires a classification model")
    X = _check_X(model, X)
    if model.config.learner == "gradient_boosted_trees":
        if model.n_classes == 2:
            p1 = _sigmoid(_raw_scores(model, X)[:, 0])
            return np.column_stack([1.0 - p1, p1])
        s = _sigmoid(_raw_scores(model, X))
        return s / s.sum(axis=1, keepdims=True)
    probs = np.zeros((X.shape[0], model.n_classes))
    for tree in model.trees:
        probs += tree.apply(X)
    return probs / len(model.trees)


def predict(model: FittedModel, X) -> np.ndarray:
    """Regression values, or class labels (argmax probability, ties to the
    lowest class index)."""
    X = _check_X(model, X)
    if model.task == "classification":
        return np.argmax(predict_proba(model, X), axis=1)
    if model.config.learner == "gradient_boosted_trees":
        return _raw_scores(model, X)[:, 0]
    out = np.zeros(X.shape[0])
    for tree in model.trees:
        out += tree.apply(X)
    return out / len(model.trees)
