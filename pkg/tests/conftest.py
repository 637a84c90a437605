import numpy as np
import pytest

from galax import AutoMLSettings, Dataset, GalaxConfig, KernelSpec


def heterogeneous_dataset(n=60, d=3, seed=7, noise=0.05):
    """Coordinates on the unit square; the first feature's coefficient
    varies linearly with the first coordinate (4u - 2)."""
    rng = np.random.default_rng(seed)
    coords = rng.random((n, 2))
    X = rng.random((n, d))
    y = (4.0 * coords[:, 0] - 2.0) * X[:, 0] + X[:, 1] + noise * rng.normal(size=n)
    names = tuple(f"x{i + 1}" for i in range(d))
    return Dataset(coords, X, y, feature_names=names, task="regression")


def small_config(k=25, seed=1, budget=6, threads=1, **kw):
    """Cheap search settings for fast engine tests."""
    automl = AutoMLSettings(
        candidates=("decision_tree", "random_forest"),
        grids={
            "decision_tree": {"max_depth": [3, 6]},
            "random_forest": {"n_estimators": [25], "max_features": ["sqrt"]},
        },
        budget=budget,
        min_local_samples=20,
        seed=seed,
    )
    return GalaxConfig(
        kernel=KernelSpec(function="bisquare", fixed=False, k=k),
        automl=automl,
        threads=threads,
        master_seed=seed,
        **kw,
    )


@pytest.fixture
def het_dataset():
    return heterogeneous_dataset()


@pytest.fixture
def quick_config():
    return small_config()
