"""Top-level engine configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .automl import AutoMLSettings
from .errors import InvalidInputError
from .explain import ExplainSettings
from .geometry import KernelSpec

BW_METHODS = ("auto", "isa", "performance")


@dataclass(frozen=True)
class GalaxConfig:
    """Everything the engine needs besides the dataset.

    If ``kernel`` already carries a bandwidth (or k), ``bw_method`` is
    ignored.  ``bw_method="auto"`` resolves to the autocorrelation scan for
    regression and to performance search for classification.  ``weight_floor``
    drops kernel weights at or below it from local training subsets (the
    bisquare kernel's hard zeros drop naturally).  ``master_seed`` determines
    every per-location seed, so results are identical for any thread count.
    """

    kernel: KernelSpec = KernelSpec()
    bw_method: str = "auto"
    automl: AutoMLSettings = field(default_factory=AutoMLSettings)
    explain: ExplainSettings = field(default_factory=ExplainSettings)
    weight_floor: float = 1e-6
    threads: int = 1
    master_seed: int = 0

    def __post_init__(self):
        if self.bw_method not in BW_METHODS:
            raise InvalidInputError(f"bw_method must be one of {BW_METHODS}")
        if not 0.0 <= self.weight_floor < 1.0 or not np.isfinite(self.weight_floor):
            raise InvalidInputError("weight_floor must be in [0, 1)")
        if self.threads < 1:
            raise InvalidInputError("threads must be >= 1")
