"""Geographically weighted AutoML with exact Shapley explanations.

A model is selected and tuned separately at every spatial location using
kernel-based distance weighting; the spatial bandwidth is chosen
automatically (autocorrelation scan or leave-focal-out performance search)
and every local prediction is explained with Shapley values.

Typical use::

    from galax import Dataset, GalaxConfig, engine, results

    ds = Dataset(coords, X, y, feature_names=("a", "b"), task="regression")
    res = engine.fit(ds, GalaxConfig(master_seed=42))
    print(results.summary(res).text)
    results.save(res, "run.galax")
"""

from .automl import AutoMLSettings, SearchOutcome
from .configs import GalaxConfig
from .engine import Dataset
from .explain import ExplainSettings, Explanation
from .geometry import KernelSpec
from .learners import FittedModel, LearnerConfig
from .results import GalaxResults, LocalFit

__version__ = "0.1.0"

__all__ = [
    "AutoMLSettings",
    "Dataset",
    "ExplainSettings",
    "Explanation",
    "FittedModel",
    "GalaxConfig",
    "GalaxResults",
    "KernelSpec",
    "LearnerConfig",
    "LocalFit",
    "SearchOutcome",
    "__version__",
]
