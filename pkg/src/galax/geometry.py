"""Distance computation and kernel weighting.

This module builds the spatial weight vector around a focal location: the
distance metric (planar Euclidean or spherical haversine), the
distance-to-weight kernel functions, and the fixed/adaptive bandwidth
handling.  Weights live in [0, 1]; the focal point always receives weight 1.

Kernel functions
----------------

All kernels are evaluated as ``K(z)`` with ``z = d / b``:

- ``bisquare``:     ``(1 - z**2)**2`` for ``z < 1``, else 0 (compact support)
- ``gaussian``:     ``exp(-0.5 * z**2)``
- ``exponential``:  ``exp(-z)``

The adaptive bandwidth at a focal point is the distance to its k-th nearest
neighbour (self excluded); under the bisquare kernel that neighbour receives
weight exactly 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateGeometryError,
    InvalidBandwidthError,
    InvalidInputError,
    InvalidKError,
)

EARTH_RADIUS_M = 6_371_000.0

KERNEL_FUNCTIONS = ("bisquare", "gaussian", "exponential")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel function plus bandwidth mode.

    ``fixed=True`` uses ``bandwidth`` as a constant distance; ``fixed=False``
    uses ``k`` nearest neighbours to set a per-location cutoff.  Either value
    may be left ``None``, meaning "resolve automatically" (the engine fills it
    in before fitting).  ``geodesic=True`` treats coordinates as lon/lat
    degrees and measures great-circle distances in metres.
    """

    function: str = "bisquare"
    fixed: bool = False
    bandwidth: float | None = None
    k: int | None = None
    geodesic: bool = False

    def __post_init__(self):
        if self.function not in KERNEL_FUNCTIONS:
            raise InvalidInputError(
                f"unknown kernel function {self.function!r}; "
                f"expected one of {KERNEL_FUNCTIONS}"
            )
        if self.bandwidth is not None:
            b = float(self.bandwidth)
            if not np.isfinite(b) or b <= 0.0:
                raise InvalidBandwidthError(f"fixed bandwidth must be finite and > 0, got {b}")
        if self.k is not None and int(self.k) < 2:
            raise InvalidKError(f"adaptive k must be >= 2, got {self.k}")

    @property
    def resolved(self) -> bool:
        """True once the bandwidth (fixed) or k (adaptive) is set."""
        return self.bandwidth is not None if self.fixed else self.k is not None


def as_coords(points) -> np.ndarray:
    """Validate and return an (n, 2) float64 coordinate array.

    Raises
    ------
    InvalidInputError
        If the array is not n-by-2 with n >= 2, or contains non-finite values.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError(f"coordinates must be an (n, 2) array, got shape {pts.shape}")
    if pts.shape[0] < 2:
        raise InvalidInputError("need at least 2 coordinate points")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("coordinates contain non-finite values")
    return pts


def _haversine(lon1, lat1, lon2, lat2):
    if np.any(np.abs(lat1) > 90.0) or np.any(np.abs(lat2) > 90.0):
        raise InvalidInputError("geodesic latitude outside [-90, 90]")
    lon1, lat1, lon2, lat2 = map(np.radians, (lon1, lat1, lon2, lat2))
    a = (
        np.sin((lat2 - lat1) / 2.0) ** 2
        + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(a)))


def distance(a, b, geodesic: bool = False) -> float:
    """Distance between two points.

    Euclidean in coordinate units, or great-circle metres on a sphere of
    radius 6 371 000 m when ``geodesic`` (points are lon, lat degrees).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (2,) or b.shape != (2,):
        raise InvalidInputError("points must be length-2 (x, y)")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("non-finite point coordinates")
    if geodesic:
        return float(_haversine(a[0], a[1], b[0], b[1]))
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def distances_from(focal_index: int, coords: np.ndarray, geodesic: bool = False) -> np.ndarray:
    """Distances from one coordinate row to every row (self distance 0)."""
    coords = as_coords(coords)
    n = coords.shape[0]
    if not 0 <= focal_index < n:
        raise InvalidInputError(f"focal index {focal_index} outside [0, {n})")
    p = coords[focal_index]
    if geodesic:
        d = _haversine(p[0], p[1], coords[:, 0], coords[:, 1])
        d[focal_index] = 0.0
        return d
    delta = coords - p
    return np.hypot(delta[:, 0], delta[:, 1])


def pairwise_distances(coords: np.ndarray, geodesic: bool = False) -> np.ndarray:
    """Full symmetric n-by-n distance matrix (brute force)."""
    coords = as_coords(coords)
    if geodesic:
        lon = coords[:, 0]
        lat = coords[:, 1]
        d = _haversine(lon[:, None], lat[:, None], lon[None, :], lat[None, :])
        np.fill_diagonal(d, 0.0)
        return d
    dx = coords[:, 0][:, None] - coords[:, 0][None, :]
    dy = coords[:, 1][:, None] - coords[:, 1][None, :]
    return np.hypot(dx, dy)


def kernel_weight(d, b: float, function: str = "bisquare"):
    """Evaluate a kernel at distance(s) ``d`` with bandwidth ``b``.

    Returns a scalar for scalar input, an array otherwise; values in [0, 1].
    """
    if function not in KERNEL_FUNCTIONS:
        raise InvalidInputError(f"unknown kernel function {function!r}")
    if not np.isfinite(b) or b <= 0.0:
        raise InvalidBandwidthError(f"bandwidth must be finite and > 0, got {b}")
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < 0) or not np.all(np.isfinite(d_arr)):
        raise InvalidInputError("distances must be finite and >= 0")
    z = d_arr / b
    if function == "bisquare":
        w = np.where(z < 1.0, (1.0 - z**2) ** 2, 0.0)
    elif function == "gaussian":
        w = np.exp(-0.5 * z**2)
    else:
        w = np.exp(-z)
    if np.isscalar(d) or d_arr.ndim == 0:
        return float(w)
    return w


def adaptive_cutoff(
    focal_index: int, coords: np.ndarray, k: int, geodesic: bool = False
) -> float:
    """Distance from the focal point to its k-th nearest neighbour.

    The focal point itself is excluded; ties are broken by index order.

    Raises
    ------
    InvalidKError
        If k is outside [2, n-1].
    DegenerateGeometryError
        If duplicate coordinates make the cutoff distance 0.
    """
    coords = as_coords(coords)
    n = coords.shape[0]
    if not 2 <= k <= n - 1:
        raise InvalidKError(f"adaptive k must be in [2, {n - 1}], got {k}")
    d = distances_from(focal_index, coords, geodesic=geodesic)
    others = np.delete(np.arange(n), focal_index)
    order = np.lexsort((others, d[others]))
    cutoff = float(d[others[order[k - 1]]])
    if cutoff <= 0.0:
        raise DegenerateGeometryError(
            f"adaptive cutoff at location {focal_index} is 0 (duplicate coordinates)"
        )
    return cutoff


def kernel_row(focal_index: int, coords: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Kernel weight vector for one focal location over all n points.

    Fixed mode uses ``spec.bandwidth`` directly; adaptive mode uses the
    distance to the focal point's k-th nearest neighbour.  The focal weight
    is exactly 1.
    """
    coords = as_coords(coords)
    if not spec.resolved:
        raise InvalidInputError("kernel spec has no bandwidth; resolve it first")
    if spec.fixed:
        b = float(spec.bandwidth)
    else:
        b = adaptive_cutoff(focal_index, coords, int(spec.k), geodesic=spec.geodesic)
    d = distances_from(focal_index, coords, geodesic=spec.geodesic)
    w = kernel_weight(d, b, spec.function)
    w[focal_index] = 1.0
    return w
