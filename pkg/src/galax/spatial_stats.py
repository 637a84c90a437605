"""Global Moran's I and the incremental autocorrelation distance scan.

The scan evaluates Moran's I over a ladder of distance-band weight matrices
and picks the band whose z-score peaks: that distance is taken as the
characteristic spatial scale of the variable and feeds bandwidth selection.

Moran's I for values ``y`` with weights ``w``::

    I = (n / S0) * sum_ij( w_ij * z_i * z_j ) / sum_i( z_i**2 ),   z = y - mean(y)

with ``S0 = sum_ij w_ij``.  The expectation under the null is ``-1/(n-1)``;
the variance uses the randomization (permutation) assumption with the usual
S1/S2/kurtosis terms, so it can be checked directly against permutation
resampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateValuesError,
    InsufficientBandsError,
    InvalidInputError,
    NoNeighborsError,
)
from .geometry import as_coords, pairwise_distances


@dataclass(frozen=True)
class MoranResult:
    """Moran's I with its null moments and z-score.

    ``variance`` and ``z`` are NaN when n < 4 (the randomization variance
    is undefined there).
    """

    I: float
    expected: float
    variance: float
    z: float


@dataclass(frozen=True)
class IsaBand:
    distance: float
    moran: MoranResult


@dataclass(frozen=True)
class IsaScan:
    """Result of a distance-band scan.

    ``selection_rule`` records how ``selected_distance`` was chosen:
    ``"first_peak"`` (first strict local maximum of z) or ``"max_z"``
    (global maximum fallback when no interior peak exists).
    """

    bands: tuple[IsaBand, ...]
    selected_distance: float
    selection_rule: str


def distance_band_weights(coords, threshold: float, geodesic: bool = False) -> np.ndarray:
    """Binary weight matrix: 1 where 0 < d_ij <= threshold, else 0.

    The diagonal is 0 and the matrix is symmetric.  Coincident points are
    never linked (their distance is 0, not positive).
    """
    if not np.isfinite(threshold) or threshold <= 0.0:
        raise InvalidInputError(f"threshold must be finite and > 0, got {threshold}")
    d = pairwise_distances(as_coords(coords), geodesic=geodesic)
    w = ((d > 0.0) & (d <= threshold)).astype(float)
    return w


def morans_i(values, weights) -> MoranResult:
    """Global Moran's I of ``values`` under an n-by-n weight matrix.

    Raises
    ------
    DegenerateValuesError
        If the values are all equal (I is 0/0).
    NoNeighborsError
        If the weight matrix sums to 0.
    """
    y = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = y.shape[0]
    if y.ndim != 1 or n < 2:
        raise InvalidInputError("values must be a vector of length >= 2")
    if w.shape != (n, n):
        raise InvalidInputError(f"weights must be ({n}, {n}), got {w.shape}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise InvalidInputError("non-finite values or weights")
    z = y - y.mean()
    m2_sum = float(z @ z)
    if m2_sum == 0.0:
        raise DegenerateValuesError("all values equal; Moran's I undefined")
    s0 = float(w.sum())
    if s0 <= 0.0:
        raise NoNeighborsError("weight matrix sums to 0 (no neighbours)")
    cross = float(z @ w @ z)
    i_stat = (n / s0) * cross / m2_sum
    expected = -1.0 / (n - 1)

    if n < 4:
        return MoranResult(I=i_stat, expected=expected, variance=float("nan"), z=float("nan"))

    # Randomization-assumption moments (S1, S2, kurtosis correction).
    s1 = 0.5 * float(((w + w.T) ** 2).sum())
    row = w.sum(axis=1)
    col = w.sum(axis=0)
    s2 = float(((row + col) ** 2).sum())
    m2 = m2_sum / n
    m4 = float((z**4).sum()) / n
    b2 = m4 / (m2 * m2)
    n2 = n * n
    s02 = s0 * s0
    a = n * ((n2 - 3 * n + 3) * s1 - n * s2 + 3 * s02)
    b = b2 * ((n2 - n) * s1 - 2 * n * s2 + 6 * s02)
    variance = (a - b) / ((n - 1) * (n - 2) * (n - 3) * s02) - expected * expected
    variance = max(variance, 0.0)
    z_score = (i_stat - expected) / np.sqrt(variance) if variance > 0.0 else float("nan")
    return MoranResult(I=i_stat, expected=expected, variance=variance, z=z_score)


def _default_band_grid(coords, n_bands: int, geodesic: bool):
    """Start at the largest nearest-neighbour distance (every point keeps at
    least one neighbour) and step toward half the dataset diameter."""
    d = pairwise_distances(coords, geodesic=geodesic)
    off = d + np.where(np.eye(d.shape[0], dtype=bool), np.inf, 0.0)
    start = float(off.min(axis=1).max())
    top = 0.5 * float(d.max())
    increment = (top - start) / n_bands
    return start, increment


def isa_scan(
    y,
    coords,
    start: float | None = None,
    increment: float | None = None,
    n_bands: int = 10,
    geodesic: bool = False,
) -> IsaScan:
    """Scan Moran's I z-scores over increasing distance bands.

    Band distances are ``start, start + increment, ...`` (``n_bands`` of
    them).  Defaults: ``start`` is the maximum nearest-neighbour distance,
    ``increment`` spans from there to half the maximum pairwise distance.
    Bands whose weight matrix is empty are dropped; at least three usable
    bands are required.

    The selected distance is the first strict local maximum of z across
    bands; if no interior band is a strict peak, the band with maximal z is
    used and ``selection_rule`` says so.
    """
    coords = as_coords(coords)
    y = np.asarray(y, dtype=float)
    if y.shape[0] != coords.shape[0]:
        raise InvalidInputError("y length must match coordinate count")
    if np.ptp(y) == 0.0:
        raise DegenerateValuesError("all values equal; scan undefined")
    if n_bands < 3:
        raise InsufficientBandsError(f"need at least 3 bands, got {n_bands}")

    if start is None or increment is None:
        d_start, d_inc = _default_band_grid(coords, n_bands, geodesic)
        start = d_start if start is None else float(start)
        increment = d_inc if increment is None else float(increment)
    if not np.isfinite(start) or start <= 0.0:
        raise InvalidInputError(f"band start must be > 0, got {start}")
    if not np.isfinite(increment) or increment <= 0.0:
        raise InsufficientBandsError(
            f"non-positive band increment ({increment}); geometry too concentrated"
        )

    bands = []
    for t in range(n_bands):
        dist = start + t * increment
        try:
            result = morans_i(y, distance_band_weights(coords, dist, geodesic=geodesic))
        except NoNeighborsError:
            continue
        bands.append(IsaBand(distance=dist, moran=result))
    if len(bands) < 3:
        raise InsufficientBandsError(f"only {len(bands)} usable bands; need >= 3")

    zs = np.array([b.moran.z for b in bands])
    if np.any(np.isnan(zs)):
        raise InsufficientBandsError("z-scores undefined (too few points for variance)")
    selected = None
    rule = "first_peak"
    for t in range(1, len(bands) - 1):
        if zs[t] > zs[t - 1] and zs[t] > zs[t + 1]:
            selected = bands[t].distance
            break
    if selected is None:
        rule = "max_z"
        selected = bands[int(np.argmax(zs))].distance
    return IsaScan(bands=tuple(bands), selected_distance=float(selected), selection_rule=rule)
