import numpy as np
import pytest
from dataclasses import replace

from conftest import heterogeneous_dataset, small_config
from galax import engine
from galax.automl import AutoMLSettings
from galax.configs import GalaxConfig
from galax.engine import (
    Dataset,
    fit,
    leave_focal_out_predictions,
    predict,
    resolve_bandwidth,
    search_bandwidth_performance,
)
from galax.errors import EngineError, InvalidInputError, TooFewSamplesError
from galax.geometry import KernelSpec, pairwise_distances
from galax.learners import predict as learner_predict


# ---------------------------------------------------------------------------
# dataset validation


def test_dataset_rejects_nonfinite():
    rng = np.random.default_rng(0)
    X = rng.random((12, 2))
    X[3, 1] = np.nan
    with pytest.raises(InvalidInputError):
        Dataset(rng.random((12, 2)), X, rng.random(12), ("a", "b"), "regression")


def test_dataset_rejects_duplicate_feature_names():
    rng = np.random.default_rng(1)
    with pytest.raises(InvalidInputError):
        Dataset(rng.random((12, 2)), rng.random((12, 2)), rng.random(12),
                ("a", "a"), "regression")


def test_dataset_fingerprint_sensitive_to_content():
    rng = np.random.default_rng(2)
    coords = rng.random((12, 2))
    X = rng.random((12, 2))
    y = rng.random(12)
    a = Dataset(coords, X, y, ("a", "b"), "regression").fingerprint()
    y2 = y.copy()
    y2[0] += 1e-9
    b = Dataset(coords, X, y2, ("a", "b"), "regression").fingerprint()
    assert a.content_hash != b.content_hash
    assert a.rows == 12 and a.n_features == 2


# ---------------------------------------------------------------------------
# bandwidth resolution


def test_preset_bandwidth_is_identity():
    ds = heterogeneous_dataset(n=30)
    spec = KernelSpec(function="gaussian", fixed=True, bandwidth=3.0)
    cfg = GalaxConfig(kernel=spec, automl=AutoMLSettings(min_local_samples=20))
    assert resolve_bandwidth(ds, cfg) is spec


def test_isa_fixed_mode_uses_scan_distance():
    # two spatial clusters with distinct targets: the scan finds the cluster scale
    rng = np.random.default_rng(3)
    a = rng.random((20, 2))
    b = rng.random((20, 2)) + np.array([20.0, 0.0])
    coords = np.vstack([a, b])
    X = rng.random((40, 2))
    y = np.r_[np.zeros(20), np.ones(20)] + 0.05 * rng.normal(size=40)
    ds = Dataset(coords, X, y, ("a", "b"), "regression")
    cfg = GalaxConfig(kernel=KernelSpec(fixed=True), bw_method="isa")
    spec = resolve_bandwidth(ds, cfg)
    from galax.spatial_stats import isa_scan

    scan = isa_scan(y, coords)
    assert spec.bandwidth == scan.selected_distance
    assert 1.0 <= spec.bandwidth <= 4.0


def test_isa_adaptive_conversion_counts_lattice_neighbours():
    # uniform grid, spacing 1: 12 points lie within 2.1 of an interior point
    side = 9
    gx, gy = np.meshgrid(np.arange(side, dtype=float), np.arange(side, dtype=float))
    coords = np.column_stack([gx.ravel(), gy.ravel()])
    n = coords.shape[0]
    d = pairwise_distances(coords)
    counts = ((d > 0) & (d <= 2.1)).sum(axis=1)
    interior = int(counts.max())
    assert interior == 12
    k_expected = int(np.floor(np.median(counts) + 0.5))
    k_expected = min(max(k_expected, 5), n - 1)

    rng = np.random.default_rng(4)
    X = rng.random((n, 2))
    y = coords[:, 0] + 0.1 * rng.normal(size=n)
    ds = Dataset(coords, X, y, ("a", "b"), "regression")

    from unittest.mock import patch

    from galax.spatial_stats import IsaScan

    fake = IsaScan(bands=(), selected_distance=2.1, selection_rule="max_z")
    cfg = GalaxConfig(kernel=KernelSpec(fixed=False),
                      automl=AutoMLSettings(min_local_samples=5, cv_folds=3))
    with patch("galax.engine.spatial_stats.isa_scan", return_value=fake):
        spec = resolve_bandwidth(ds, cfg)
    assert spec.k == k_expected


def test_performance_search_matches_exhaustive_oracle(het_dataset, quick_config):
    cfg = replace(quick_config, bw_method="performance")
    spec, table = search_bandwidth_performance(het_dataset, cfg)
    scores = {value: score for value, score in table if score is not None}
    assert scores, "no feasible candidates"
    best_score = max(scores.values())
    smallest_best = min(v for v, s in scores.items() if s == best_score)
    assert spec.k == smallest_best
    # exhaustive re-evaluation reproduces every table entry
    for value, score in table:
        if score is None:
            continue
        preds = leave_focal_out_predictions(het_dataset, cfg, replace(cfg.kernel, k=int(value)))
        sse = float(np.sum((het_dataset.y - preds) ** 2))
        sst = float(np.sum((het_dataset.y - het_dataset.y.mean()) ** 2))
        assert score == pytest.approx(1.0 - sse / sst, abs=1e-12)


def test_homogeneous_data_prefers_large_bandwidths():
    # no spatial heterogeneity: more data can only help, so selection lands
    # in the top half of the candidate grid (the literal largest candidate is
    # not statistically identifiable: top-of-grid differences are below the
    # paired noise of the leave-focal-out objective)
    settings = AutoMLSettings(candidates=("decision_tree",),
                              grids={"decision_tree": {"max_depth": [1]}},
                              budget=1, min_local_samples=20, seed=0)
    hits = 0
    for seed in range(5):
        rng = np.random.default_rng(700 + seed)
        n = 120
        coords = rng.random((n, 2))
        X = rng.random((n, 2))
        y = np.where(X[:, 0] > 0.5, 2.0, 0.0) + 1.0 * rng.normal(size=n)
        ds = Dataset(coords, X, y, ("a", "b"), "regression")
        cfg = GalaxConfig(kernel=KernelSpec(function="bisquare", fixed=False),
                          bw_method="performance", automl=replace(settings, seed=seed),
                          master_seed=seed, threads=8)
        spec, table = search_bandwidth_performance(ds, cfg)
        values = sorted(v for v, _ in table)
        if spec.k >= values[len(values) // 2]:
            hits += 1
    assert hits >= 4, f"large-bandwidth preference on only {hits}/5 seeds"


def test_single_candidate_returned_without_comparison(het_dataset, quick_config):
    # n - 1 == min_local_samples collapses the grid to one candidate
    ds = heterogeneous_dataset(n=21)
    cfg = replace(quick_config, bw_method="performance")
    spec, table = search_bandwidth_performance(ds, cfg)
    assert len(table) == 1
    assert spec.k == 20


# ---------------------------------------------------------------------------
# fitting


def test_too_few_rows_rejected():
    ds = heterogeneous_dataset(n=15)
    with pytest.raises(TooFewSamplesError):
        fit(ds, small_config())


def test_local_fits_indexed_densely(het_dataset, quick_config):
    res = fit(het_dataset, quick_config)
    assert [lf.location for lf in res.local_fits] == list(range(het_dataset.n))
    assert len(res.models) == het_dataset.n
    for lf in res.local_fits:
        assert lf.effective_n >= 1.0
        assert abs(lf.shap.sum() + lf.base_value - lf.explained_target) <= 1e-9


def test_thread_count_does_not_change_results(het_dataset, quick_config):
    res1 = fit(het_dataset, quick_config)
    res8 = fit(het_dataset, replace(quick_config, threads=8))
    assert res1 == res8


def test_global_metrics_match_oracle_on_stored_predictions(het_dataset, quick_config):
    res = fit(het_dataset, quick_config)
    yhat = np.array([lf.prediction for lf in res.local_fits])
    y = het_dataset.y
    sse = float(np.sum((y - yhat) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    assert res.global_metrics["r2"] == 1.0 - sse / sst
    assert res.global_metrics["rmse"] == float(np.sqrt(np.mean((y - yhat) ** 2)))


def test_expansion_flag_set_for_tiny_fixed_gaussian(het_dataset, quick_config):
    # a minuscule fixed gaussian bandwidth leaves only the focal row above
    # the floor; every location must expand and be flagged
    cfg = replace(quick_config,
                  kernel=KernelSpec(function="gaussian", fixed=True, bandwidth=1e-4))
    res = fit(het_dataset, cfg)
    assert all(lf.expanded for lf in res.local_fits)
    assert all(lf.effective_n >= 1.0 for lf in res.local_fits)


def test_degenerate_huge_bandwidth_selects_identical_config():
    # binary first feature with a wide margin: the first canonical config
    # (depth-3 decision tree) scores exactly 1.0 in every fold at every
    # location, so the canonical tie-break forces one selection everywhere
    rng = np.random.default_rng(5)
    n = 40
    coords = rng.random((n, 2))
    X = np.column_stack([rng.choice([-1.0, 1.0], size=n), rng.normal(size=n)])
    y = np.where(X[:, 0] > 0.0, 2.0, -1.0)
    ds = Dataset(coords, X, y, ("a", "b"), "regression")
    b = 1e9 * float(pairwise_distances(coords).max())
    cfg = small_config(seed=2)
    cfg = replace(cfg, kernel=KernelSpec(function="gaussian", fixed=True, bandwidth=b))
    res = fit(ds, cfg)
    configs = {(lf.selected.learner, tuple(sorted(lf.selected.hyperparameters.items())))
               for lf in res.local_fits}
    assert len(configs) == 1
    assert all(lf.selected.learner == "decision_tree" for lf in res.local_fits)


def test_leave_focal_out_never_trains_on_focal(het_dataset, quick_config):
    # removing the focal row's target signal must not change its LOO prediction
    spec = replace(quick_config.kernel, k=25)
    preds = leave_focal_out_predictions(het_dataset, quick_config, spec)
    probe = 7
    y2 = het_dataset.y.copy()
    y2[probe] += 1000.0  # absurd focal target
    ds2 = Dataset(het_dataset.coords, het_dataset.X, y2,
                  het_dataset.feature_names, "regression")
    preds2 = leave_focal_out_predictions(ds2, quick_config, spec)
    assert preds2[probe] == preds[probe]


def test_engine_error_names_location(het_dataset, quick_config):
    # filtering by a floor of ~1 starves every neighbourhood; expansion keeps
    # raw rows but weights stay tiny positive, so fitting still works --
    # instead force failure via an impossible metric/grid combination
    bad = replace(
        quick_config,
        automl=replace(quick_config.automl,
                       grids={"decision_tree": {"max_depth": [0]},
                              "random_forest": {"n_estimators": [0]}}),
    )
    with pytest.raises(EngineError) as err:
        fit(het_dataset, bad)
    assert "location 0" in str(err.value)


# ---------------------------------------------------------------------------
# out-of-sample prediction


def test_predict_at_training_location_matches_local_model(het_dataset, quick_config):
    res = fit(het_dataset, quick_config)
    j = 11
    out = predict(res, het_dataset.coords[[j]], het_dataset.X[[j]])
    assert out[0] == res.local_fits[j].prediction


def test_predict_matches_nearest_neighbour_oracle(het_dataset, quick_config):
    res = fit(het_dataset, quick_config)
    rng = np.random.default_rng(6)
    new_coords = rng.random((20, 2))
    new_X = rng.random((20, het_dataset.d))
    got = predict(res, new_coords, new_X)
    for i in range(20):
        d = np.hypot(*(het_dataset.coords - new_coords[i]).T)
        j = int(np.argmin(d))
        expected = learner_predict(res.models[j], new_X[i][None, :])[0]
        assert got[i] == expected


def test_predict_dimension_mismatch(het_dataset, quick_config):
    res = fit(het_dataset, quick_config)
    with pytest.raises(Exception):
        predict(res, np.zeros((2, 2)), np.zeros((2, het_dataset.d + 1)))


def test_geodesic_fit_end_to_end(quick_config):
    # lon/lat degrees over a ~100 km patch; adaptive cutoffs come out in metres
    rng = np.random.default_rng(12)
    n = 40
    coords = np.column_stack([-97.0 + rng.random(n), 30.0 + rng.random(n)])
    X = rng.random((n, 2))
    y = X[:, 0] + coords[:, 0] / 10.0 + 0.05 * rng.normal(size=n)
    ds = Dataset(coords, X, y, ("a", "b"), "regression")
    cfg = replace(quick_config,
                  kernel=KernelSpec(function="bisquare", fixed=False, k=25, geodesic=True))
    res = fit(ds, cfg)
    for lf in res.local_fits:
        assert 1e3 < lf.bandwidth_used < 5e5
    out = predict(res, coords[:3], X[:3])
    assert out.shape == (3,)
