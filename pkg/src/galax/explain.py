"""Shapley-value attributions for single predictions.

The value function is interventional over an explicit background sample:
``v(S)`` is the mean model output over background rows with the features in
S overwritten by the explained point.  Exact mode enumerates all 2^d
coalitions (feasible up to ``max_exact_features``); sampled mode averages
marginal contributions over seeded antithetic permutation pairs and records
the additivity residual instead of hiding it.

For classification the explained scalar is a class probability (the
predicted class by default), not log-odds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, UseSampledModeError
from .hashing import stable_hash
from .learners import FittedModel, predict, predict_proba


@dataclass(frozen=True)
class ExplainSettings:
    """How local predictions are explained.

    ``mode`` is ``"auto"`` (exact when d <= max_exact_features, else
    sampled), ``"exact"``, or ``"sampled"``.  ``classification_target`` is
    ``"predicted"`` or an explicit class index.  ``enabled=False`` skips
    explanations entirely (used by bandwidth search passes).
    """

    mode: str = "auto"
    n_permutations: int = 200
    max_exact_features: int = 12
    background_size: int = 64
    classification_target: int | str = "predicted"
    enabled: bool = True

    def __post_init__(self):
        if self.mode not in ("auto", "exact", "sampled"):
            raise InvalidInputError(f"unknown explain mode {self.mode!r}")
        if self.n_permutations < 10:
            raise InvalidInputError("sampled mode needs n_permutations >= 10")
        if self.background_size < 1:
            raise InvalidInputError("background_size must be >= 1")


@dataclass(frozen=True)
class Explanation:
    """Per-feature attributions ``phi`` plus the base value.

    ``target_described`` is the scalar model output that was explained;
    ``residual`` is ``sum(phi) + base_value - target_described`` (tiny in
    exact mode, reported honestly in sampled mode).
    """

    phi: np.ndarray
    base_value: float
    mode_used: str
    target_described: float
    residual: float


def _validate_inputs(x, background):
    x = np.asarray(x, dtype=float).reshape(-1)
    bg = np.asarray(background, dtype=float)
    if bg.ndim != 2 or bg.shape[1] != x.shape[0]:
        raise InvalidInputError("background must be (B, d) matching x")
    if bg.shape[0] < 1:
        raise InvalidInputError("background must have at least one row")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(bg))):
        raise InvalidInputError("non-finite explanation inputs")
    return x, bg


def exact_shapley(model_output, x, background, max_exact_features: int = 12) -> Explanation:
    """Exact Shapley values by coalition enumeration.

    ``model_output`` must accept an (m, d) matrix and return m scalars.
    phi_j = sum over S not containing j of |S|!(d-|S|-1)!/d! *
    (v(S+j) - v(S)); base_value = v(empty set).
    """
    x, bg = _validate_inputs(x, background)
    d = x.shape[0]
    if d > max_exact_features:
        raise UseSampledModeError(
            f"{d} features > max_exact_features={max_exact_features}; use sampled mode"
        )
    n_masks = 1 << d
    masks = np.arange(n_masks)
    bits = (masks[:, None] >> np.arange(d)[None, :]) & 1  # (n_masks, d)
    composite = np.where(bits[:, None, :].astype(bool), x[None, None, :], bg[None, :, :])
    v = np.asarray(model_output(composite.reshape(-1, d)), dtype=float)
    v = v.reshape(n_masks, bg.shape[0]).mean(axis=1)

    sizes = bits.sum(axis=1)
    fact = [math.factorial(s) for s in range(d + 1)]
    coef = np.array([fact[s] * fact[d - 1 - s] / fact[d] for s in range(d)])
    phi = np.empty(d)
    for j in range(d):
        without = masks[(masks >> j) & 1 == 0]
        phi[j] = np.sum(coef[sizes[without]] * (v[without | (1 << j)] - v[without]))
    base = float(v[0])
    target = float(np.asarray(model_output(x[None, :]), dtype=float)[0])
    return Explanation(phi=phi, base_value=base, mode_used="exact",
                       target_described=target, residual=float(phi.sum() + base - target))


def sampled_shapley(model_output, x, background, n_permutations: int = 200,
                    seed: int = 0) -> Explanation:
    """Monte-Carlo Shapley values via antithetic permutation sampling.

    Permutations are drawn in (pi, reversed pi) pairs from a seeded
    generator; phi is the mean marginal contribution.  The additivity
    residual is recorded on the result.
    """
    x, bg = _validate_inputs(x, background)
    if n_permutations < 10:
        raise InvalidInputError("n_permutations must be >= 10")
    d = x.shape[0]
    B = bg.shape[0]
    rng = np.random.default_rng(stable_hash(seed, 31))
    perms = []
    for _ in range(n_permutations // 2):
        p = rng.permutation(d)
        perms.append(p)
        perms.append(p[::-1])
    if n_permutations % 2:
        perms.append(rng.permutation(d))

    base = float(np.asarray(model_output(bg), dtype=float).mean())
    contrib = np.zeros(d)
    step_mask = np.zeros((d, d), dtype=bool)
    for p in perms:
        step_mask[:] = False
        for t in range(d):
            step_mask[t:, p[t]] = True
        composite = np.where(step_mask[:, None, :], x[None, None, :], bg[None, :, :])
        vs = np.asarray(model_output(composite.reshape(-1, d)), dtype=float)
        vs = vs.reshape(d, B).mean(axis=1)
        contrib[p] += np.diff(np.concatenate(([base], vs)))
    phi = contrib / len(perms)
    target = float(np.asarray(model_output(x[None, :]), dtype=float)[0])
    return Explanation(phi=phi, base_value=base, mode_used="sampled",
                       target_described=target, residual=float(phi.sum() + base - target))


def explain_local(model: FittedModel, x, background, task: str,
                  settings: ExplainSettings | None = None, seed: int = 0) -> Explanation:
    """Explain one model output at ``x`` against a local background.

    Regression explains the predicted value; classification explains the
    probability of the predicted class (or of ``settings.classification_target``).
    Mode "auto" picks exact enumeration when the feature count allows it.
    """
    settings = settings or ExplainSettings()
    x = np.asarray(x, dtype=float).reshape(-1)
    if task == "regression":
        model_output = lambda X: predict(model, X)  # noqa: E731
    else:
        if settings.classification_target == "predicted":
            target_class = int(predict(model, x[None, :])[0])
        else:
            target_class = int(settings.classification_target)
            if not 0 <= target_class < model.n_classes:
                raise InvalidInputError(
                    f"class {target_class} out of range [0, {model.n_classes})"
                )
        model_output = lambda X: predict_proba(model, X)[:, target_class]  # noqa: E731

    d = x.shape[0]
    mode = settings.mode
    if mode == "auto":
        mode = "exact" if d <= settings.max_exact_features else "sampled"
    if mode == "exact":
        return exact_shapley(model_output, x, background, settings.max_exact_features)
    return sampled_shapley(model_output, x, background, settings.n_permutations, seed)
