"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.  Each criterion also enforces its wall-clock budget.
"""

import functools
import itertools
import json
import math
import time
import zipfile

import numpy as np
import pytest

from dataclasses import replace

from galax import automl, engine, learners, results, spatial_stats
from galax.automl import AutoMLSettings, weighted_macro_f1
from galax.cli import run_cli
from galax.configs import GalaxConfig
from galax.engine import Dataset, _local_subset, _resolve_bandwidth, leave_focal_out_predictions
from galax.errors import IntegrityError, UnsupportedVersionError
from galax.explain import exact_shapley
from galax.geometry import kernel_weight, pairwise_distances, KernelSpec
from galax.learners import LearnerConfig


def criterion(number, name, budget_s):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"ACCEPTANCE {number:>2} {name}: FAIL "
                      f"({time.perf_counter() - start:.1f}s)")
                raise
            elapsed = time.perf_counter() - start
            print(f"ACCEPTANCE {number:>2} {name}: PASS ({elapsed:.1f}s)")
            assert elapsed < budget_s, f"runtime {elapsed:.1f}s exceeds {budget_s}s budget"
        return wrapper
    return deco


# ---------------------------------------------------------------------------
# 1. kernel identities


@criterion(1, "kernel identities", 1.0)
def test_criterion_01_kernel_identities():
    rng = np.random.default_rng(11)
    for function in ("bisquare", "gaussian", "exponential"):
        d = rng.random(1000) * 100.0
        b = rng.random(1000) * 50.0 + 1e-3
        for di, bi in zip(d[:50], b[:50]):  # scalar surface spot checks
            assert kernel_weight(0.0, bi, function) == 1.0
            w = kernel_weight(di, bi, function)
            assert 0.0 <= w <= 1.0
        # vectorised over all 1000 pairs
        w = np.array([kernel_weight(di, bi, function) for di, bi in zip(d, b)])
        assert np.all((0.0 <= w) & (w <= 1.0))
        if function == "bisquare":
            assert all(
                kernel_weight(bi * f, bi, function) == 0.0
                for bi, f in zip(b[:200], rng.random(200) + 1.0)
            )
        # monotone non-increasing in d at fixed b
        for bi in b[:20]:
            ds = np.sort(rng.random(50) * 3 * bi)
            ws = kernel_weight(ds, bi, function)
            assert np.all(np.diff(ws) <= 1e-15)


# ---------------------------------------------------------------------------
# 2. Moran's I


@criterion(2, "Moran's I oracles", 30.0)
def test_criterion_02_morans_i():
    # two-point closed form
    two = spatial_stats.morans_i(np.array([0.0, 1.0]),
                                 np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert two.I == -1.0

    # 25 random 10-point instances vs a direct double loop
    rng = np.random.default_rng(21)
    checked = 0
    while checked < 25:
        coords = rng.random((10, 2))
        y = rng.normal(size=10)
        w = spatial_stats.distance_band_weights(coords, 0.5)
        if w.sum() == 0:
            continue
        num, s0 = 0.0, 0.0
        ybar = y.mean()
        for i in range(10):
            for j in range(10):
                num += w[i, j] * (y[i] - ybar) * (y[j] - ybar)
                s0 += w[i, j]
        oracle = (10 / s0) * num / float(((y - ybar) ** 2).sum())
        assert abs(spatial_stats.morans_i(y, w).I - oracle) <= 1e-12
        checked += 1

    # permutation mean of I near -1/(n-1)
    n = 20
    coords = rng.random((n, 2))
    y = rng.normal(size=n)
    w = spatial_stats.distance_band_weights(coords, 0.4)
    sims = np.array([
        spatial_stats.morans_i(rng.permutation(y), w).I for _ in range(2000)
    ])
    se = sims.std(ddof=1) / np.sqrt(len(sims))
    assert abs(sims.mean() - (-1.0 / (n - 1))) < 3 * se


# ---------------------------------------------------------------------------
# 3. ISA recovery


@criterion(3, "ISA two-cluster recovery", 30.0)
def test_criterion_03_isa_recovery():
    spread = 1.0
    hits = 0
    for seed in range(5):
        rng = np.random.default_rng(300 + seed)
        a = rng.random((20, 2)) * spread
        b = rng.random((20, 2)) * spread + np.array([20.0 * spread, 0.0])
        coords = np.vstack([a, b])
        y = np.r_[np.zeros(20), np.ones(20)] + 0.05 * rng.normal(size=40)
        scan = spatial_stats.isa_scan(y, coords)
        if spread <= scan.selected_distance <= 4.0 * spread:
            hits += 1
    assert hits >= 4, f"only {hits}/5 seeds selected a cluster-scale distance"


# ---------------------------------------------------------------------------
# 4. Shapley correctness


@criterion(4, "Shapley correctness", 60.0)
def test_criterion_04_shapley():
    rng = np.random.default_rng(41)

    # linear closed form phi_j = w_j (x_j - mean bg_j)
    for _ in range(20):
        d = int(rng.integers(2, 7))
        w = rng.normal(size=d)
        bg = rng.normal(size=(int(rng.integers(1, 30)), d))
        x = rng.normal(size=d)
        expl = exact_shapley(lambda Z: Z @ w, x, bg)
        np.testing.assert_allclose(expl.phi, w * (x - bg.mean(axis=0)), atol=1e-9)

    # exact enumeration equals the full-permutation oracle on d <= 5 trees
    for d in (3, 4, 5):
        X = rng.normal(size=(80, d))
        y = np.where(X[:, 0] > 0, 1.0 + X[:, 1 % d], -X[:, d - 1])
        model = learners.fit(LearnerConfig("decision_tree", {"max_depth": 3}), X, y)
        f = lambda Z: learners.predict(model, Z)  # noqa: E731
        bg = X[:6].copy()
        x = X[10]
        expl = exact_shapley(f, x, bg)
        phi = np.zeros(d)
        base = float(np.mean(f(bg)))
        for perm in itertools.permutations(range(d)):
            comp = bg.copy()
            prev = base
            for j in perm:
                comp[:, j] = x[j]
                now = float(np.mean(f(comp)))
                phi[j] += now - prev
                prev = now
        phi /= math.factorial(d)
        np.testing.assert_allclose(expl.phi, phi, atol=1e-10)

    # additivity on 100 random-forest explanations with d <= 8
    count = 0
    while count < 100:
        d = int(rng.integers(2, 9))
        X = rng.normal(size=(60, d))
        y = X[:, 0] * 2 + np.sin(X[:, d - 1]) + 0.1 * rng.normal(size=60)
        model = learners.fit(
            LearnerConfig("random_forest", {"n_estimators": 8, "max_depth": 5},
                          seed=count), X, y)
        f = lambda Z: learners.predict(model, Z)  # noqa: E731
        expl = exact_shapley(f, X[int(rng.integers(60))], X[:16].copy())
        assert abs(expl.phi.sum() + expl.base_value - expl.target_described) <= 1e-9
        count += 1


# ---------------------------------------------------------------------------
# 5. determinism across worker counts


@criterion(5, "thread-count determinism", 180.0)
def test_criterion_05_determinism(tmp_path):
    rng = np.random.default_rng(51)
    n, d = 200, 5
    lines = ["x,y,target," + ",".join(f"f{i}" for i in range(d))]
    for _ in range(n):
        u, v = rng.random(), rng.random()
        feats = rng.random(d)
        target = (4 * u - 2) * feats[0] + feats[1] + 0.1 * rng.normal()
        lines.append(f"{u:.8f},{v:.8f},{target:.8f}," +
                     ",".join(f"{q:.8f}" for q in feats))
    csv_path = tmp_path / "det.csv"
    csv_path.write_text("\n".join(lines) + "\n")

    def run(threads, out):
        code = run_cli([
            "fit", "--data", str(csv_path), "--x", "x", "--y", "y",
            "--target", "target", "--task", "regression",
            "--kernel", "bisquare", "--adaptive", "--bw", "31",
            "--budget", "12", "--seed", "42",
            "--threads", str(threads), "--out", out,
        ])
        assert code == 0

    a = str(tmp_path / "t1.galax")
    b = str(tmp_path / "t8.galax")
    run(1, a)
    run(8, b)
    assert open(a, "rb").read() == open(b, "rb").read(), "archives differ"


# ---------------------------------------------------------------------------
# 6. spatial-heterogeneity recovery


def _c6_dataset(seed, n=200):
    rng = np.random.default_rng(1000 + seed)
    coords = rng.random((n, 2))
    X = rng.random((n, 2))
    y = (4 * coords[:, 0] - 2) * X[:, 0] + X[:, 1] + 0.1 * rng.normal(size=n)
    return Dataset(coords, X, y, ("x1", "x2"), "regression")


_C6_SETTINGS = AutoMLSettings(
    candidates=("decision_tree", "random_forest"),
    grids={"decision_tree": {"max_depth": [3, 6]},
           "random_forest": {"n_estimators": [25], "max_features": [1.0]}},
    budget=3, min_local_samples=20, seed=0,
)


@criterion(6, "heterogeneity recovery", 300.0)
def test_criterion_06_heterogeneity():
    hits_sign, hits_rmse = 0, 0
    for seed in range(5):
        ds = _c6_dataset(seed)
        cfg = GalaxConfig(kernel=KernelSpec(function="bisquare", fixed=False),
                          bw_method="auto", automl=_C6_SETTINGS,
                          master_seed=seed, threads=8)
        spec, method = _resolve_bandwidth(ds, cfg)
        assert method == "isa"
        res = engine.fit(ds, replace(cfg, kernel=spec))

        # (a) shap[x1] sign tracks (x1 - local mean x1) where the
        #     coefficient 4u-2 is strongly positive, anti-tracks where negative
        u = ds.coords[:, 0]
        agree_hi = total_hi = agree_lo = total_lo = 0
        for i in range(ds.n):
            idx, w_local, _, _ = _local_subset(ds, cfg, spec, i, False)
            order = np.lexsort((idx, -w_local))[: cfg.explain.background_size]
            local_mean = float(ds.X[idx[order], 0].mean())
            same = np.sign(res.local_fits[i].shap[0]) == np.sign(ds.X[i, 0] - local_mean)
            if u[i] > 0.75:
                total_hi += 1
                agree_hi += bool(same)
            elif u[i] < 0.25:
                total_lo += 1
                agree_lo += bool(same)
        if agree_hi >= 0.8 * total_hi and (total_lo - agree_lo) >= 0.8 * total_lo:
            hits_sign += 1

        # (b) leave-focal-out RMSE vs a single global model's LOO RMSE
        loo = leave_focal_out_predictions(ds, cfg, spec)
        rmse_engine = float(np.sqrt(np.mean((ds.y - loo) ** 2)))
        outcome = automl.search(ds.X, ds.y, np.ones(ds.n), "regression",
                                replace(_C6_SETTINGS, seed=seed))
        loo_global = np.empty(ds.n)
        for i in range(ds.n):
            mask = np.ones(ds.n, dtype=bool)
            mask[i] = False
            model = learners.fit(outcome.best_config, ds.X[mask], ds.y[mask])
            loo_global[i] = model.predict(ds.X[i][None, :])[0]
        rmse_global = float(np.sqrt(np.mean((ds.y - loo_global) ** 2)))
        if rmse_engine <= rmse_global:
            hits_rmse += 1
    assert hits_sign >= 4, f"sign recovery only on {hits_sign}/5 seeds"
    assert hits_rmse >= 4, f"LOO RMSE advantage only on {hits_rmse}/5 seeds"


# ---------------------------------------------------------------------------
# 7. classification path


def _c7_dataset(seed, n=200):
    rng = np.random.default_rng(2000 + seed)
    coords = rng.random((n, 2))
    X = np.column_stack([rng.uniform(-2.5, 2.5, n), rng.normal(size=n)])
    labels = (X[:, 0] > 4 * coords[:, 0] - 2).astype(int)
    flip = rng.random(n) < 0.05
    labels = np.where(flip, 1 - labels, labels)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    return Dataset(coords, X, labels, ("x1", "x2"), "classification")


_C7_SETTINGS = AutoMLSettings(
    candidates=("decision_tree",),
    grids={"decision_tree": {"max_depth": [2, 4]}},
    budget=2, min_local_samples=20, seed=0,
)


@criterion(7, "classification path", 300.0)
def test_criterion_07_classification():
    def macro_f1(y, yhat):
        return weighted_macro_f1(np.asarray(y), np.asarray(yhat), np.ones(len(y)))

    hits = 0
    for seed in range(5):
        ds = _c7_dataset(seed)
        cfg = GalaxConfig(kernel=KernelSpec(function="bisquare", fixed=False),
                          bw_method="auto", automl=_C7_SETTINGS,
                          master_seed=seed, threads=8)
        spec, method = _resolve_bandwidth(ds, cfg)
        assert method == "performance"
        f1_engine = macro_f1(ds.y, leave_focal_out_predictions(ds, cfg, spec))
        outcome = automl.search(ds.X, ds.y, np.ones(ds.n), "classification",
                                replace(_C7_SETTINGS, seed=seed), 2)
        loo_global = np.empty(ds.n, dtype=np.int64)
        for i in range(ds.n):
            mask = np.ones(ds.n, dtype=bool)
            mask[i] = False
            model = learners.fit(outcome.best_config, ds.X[mask], ds.y[mask],
                                 task="classification", n_classes=2)
            loo_global[i] = model.predict(ds.X[i][None, :])[0]
        if f1_engine >= macro_f1(ds.y, loo_global) - 0.02:
            hits += 1
    assert hits >= 4, f"engine competitive on only {hits}/5 seeds"

    # summary prints all four classification metrics
    ds = _c7_dataset(0)
    res = engine.fit(ds, GalaxConfig(kernel=KernelSpec(fixed=False, k=40),
                                     automl=_C7_SETTINGS, master_seed=0, threads=8))
    text = results.summary(res).text
    for key in ("accuracy", "precision", "recall", "f1"):
        assert key in text, f"summary lacks {key}"


# ---------------------------------------------------------------------------
# 8. degenerate-bandwidth reduction


@criterion(8, "degenerate-bandwidth reduction", 120.0)
def test_criterion_08_degenerate_bandwidth():
    rng = np.random.default_rng(81)
    n = 40
    coords = rng.random((n, 2))
    X = np.column_stack([rng.choice([-1.0, 1.0], size=n), rng.normal(size=n)])
    y = np.where(X[:, 0] > 0.0, 2.0, -1.0)
    ds = Dataset(coords, X, y, ("a", "b"), "regression")
    b = 1e9 * float(pairwise_distances(coords).max())
    cfg = GalaxConfig(
        kernel=KernelSpec(function="gaussian", fixed=True, bandwidth=b),
        automl=AutoMLSettings(budget=24, min_local_samples=20, seed=7),
        master_seed=7, threads=8,
    )
    res = engine.fit(ds, cfg)
    table = results.summary(res).data["learner_selection"]
    assert len(table) == 1, f"selection table has {len(table)} rows"
    assert table[0]["count"] == n


# ---------------------------------------------------------------------------
# 9. archive round trip and fault injection


@criterion(9, "archive round trip", 10.0)
def test_criterion_09_archive(tmp_path):
    rng = np.random.default_rng(91)
    n = 30
    coords = rng.random((n, 2))
    X = rng.random((n, 2))
    y = X[:, 0] + coords[:, 0] + 0.05 * rng.normal(size=n)
    ds = Dataset(coords, X, y, ("a", "b"), "regression")
    cfg = GalaxConfig(
        kernel=KernelSpec(fixed=False, k=22),
        automl=AutoMLSettings(candidates=("decision_tree",),
                              grids={"decision_tree": {"max_depth": [3]}},
                              budget=1, min_local_samples=20, seed=3),
        master_seed=3,
    )
    res = engine.fit(ds, cfg)
    p1 = tmp_path / "one.galax"
    p2 = tmp_path / "two.galax"
    results.save(res, p1)
    loaded = results.load(p1)
    assert loaded == res
    results.save(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()

    def rewrite(dst, mutate):
        with zipfile.ZipFile(p1) as zin, zipfile.ZipFile(dst, "w") as zout:
            for info in zin.infolist():
                data = mutate(info.filename, zin.read(info.filename))
                if data is not None:
                    zout.writestr(info, data)

    future = tmp_path / "future.galax"

    def bump_version(name, data):
        if name == "manifest.json":
            doc = json.loads(data)
            doc["schema_version"] = "99.0"
            return json.dumps(doc).encode()
        return data

    rewrite(future, bump_version)
    with pytest.raises(UnsupportedVersionError):
        results.load(future)

    truncated = tmp_path / "trunc.galax"
    rewrite(truncated,
            lambda name, data: data.rsplit(b"\n", 4)[0]
            if name == "shap_values.csv" else data)
    with pytest.raises(IntegrityError) as err:
        results.load(truncated)
    assert "shap_values" in str(err.value)


# ---------------------------------------------------------------------------
# 10. metrics oracle


@criterion(10, "metrics oracle", 5.0)
def test_criterion_10_metrics():
    rng = np.random.default_rng(101)
    for _ in range(100):
        n = int(rng.integers(5, 60))
        y = rng.normal(size=n)
        yhat = y + rng.normal(size=n) * rng.random()
        got = results.regression_metrics(y, yhat)
        sse = float(np.sum((np.asarray(y) - yhat) ** 2))
        sst = float(np.sum((y - np.mean(y)) ** 2))
        assert abs(got["rmse"] - np.sqrt(sse / n)) <= 1e-12
        assert abs(got["r2"] - (1.0 - sse / sst)) <= 1e-12

    for trial in range(100):
        n = int(rng.integers(6, 60))
        n_classes = int(rng.integers(2, 5))
        y = rng.integers(0, n_classes, size=n)
        yhat = rng.integers(0, n_classes, size=n)
        import warnings as _warnings

        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore")
            got = results.classification_metrics(y, yhat, n_classes)
        assert abs(got["accuracy"] - float(np.mean(y == yhat))) <= 1e-12
        if n_classes == 2:
            tp = int(np.sum((y == 1) & (yhat == 1)))
            fp = int(np.sum((y == 0) & (yhat == 1)))
            fn = int(np.sum((y == 1) & (yhat == 0)))
            p = tp / (tp + fp) if tp + fp else 0.0
            r = tp / (tp + fn) if tp + fn else 0.0
            f = 2 * p * r / (p + r) if p + r else 0.0
        else:
            ps, rs, fs = [], [], []
            for c in range(n_classes):
                tp = int(np.sum((y == c) & (yhat == c)))
                fp = int(np.sum((y != c) & (yhat == c)))
                fn = int(np.sum((y == c) & (yhat != c)))
                pc = tp / (tp + fp) if tp + fp else 0.0
                rc = tp / (tp + fn) if tp + fn else 0.0
                ps.append(pc)
                rs.append(rc)
                fs.append(2 * pc * rc / (pc + rc) if pc + rc else 0.0)
            p, r, f = float(np.mean(ps)), float(np.mean(rs)), float(np.mean(fs))
        assert abs(got["precision"] - p) <= 1e-12
        assert abs(got["recall"] - r) <= 1e-12
        assert abs(got["f1"] - f) <= 1e-12
