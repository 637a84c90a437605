"""CSV and GeoJSON point-data ingestion.

Dirty data is rejected, never imputed: any missing or non-finite value in a
used column fails ingestion with the offending row numbers (1-based file
lines for CSV, feature positions for GeoJSON).  Classification labels are
mapped to 0..C-1 in order of first appearance; the mapping is kept on the
dataset and recorded in saved archives.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .engine import Dataset
from .errors import DataValidationError


@dataclass(frozen=True)
class IngestSpec:
    """Where the data lives and which columns play which role.

    ``feature_cols`` ``None`` selects every remaining fully numeric column.
    For GeoJSON input the coordinate columns are ignored (coordinates come
    from the Point geometry) and target/features are read from properties.
    """

    path: str
    x_col: str = "x"
    y_col: str = "y"
    target_col: str = "target"
    feature_cols: tuple | None = None
    task: str = "regression"
    geodesic: bool = False


def _parse_number(raw):
    if isinstance(raw, (int, float)):
        value = float(raw)
    else:
        text = str(raw).strip()
        if not text:
            return None
        try:
            value = float(text)
        except ValueError:
            return None
    return value if math.isfinite(value) else None


def _column_values(rows, header, col, line_offset=2):
    """Numeric column; raises naming the bad file lines."""
    ci = header.index(col)
    values = []
    bad = []
    for r, row in enumerate(rows):
        value = _parse_number(row[ci]) if ci < len(row) else None
        if value is None:
            bad.append(r + line_offset)
        else:
            values.append(value)
    if bad:
        raise DataValidationError(
            f"column {col!r}: missing or non-numeric values at lines {bad[:20]}"
        )
    return values


def _map_labels(raw_labels):
    order = []
    mapping = {}
    for v in raw_labels:
        key = str(v).strip()
        if not key:
            raise DataValidationError("empty class label")
        if key not in mapping:
            mapping[key] = len(order)
            order.append(key)
    return [mapping[str(v).strip()] for v in raw_labels], tuple(order)


def _is_numeric_column(rows, ci):
    return all(ci < len(row) and _parse_number(row[ci]) is not None for row in rows)


def _load_csv(spec: IngestSpec) -> Dataset:
    with open(spec.path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError("empty CSV file") from None
        rows = [row for row in reader if row]
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise DataValidationError("duplicate column names in header")
    named = [spec.x_col, spec.y_col, spec.target_col] + list(spec.feature_cols or ())
    for col in named:
        if col not in header:
            raise DataValidationError(f"column {col!r} not found in {spec.path}")
    if len(set(named)) != len(named):
        raise DataValidationError("coordinate, target and feature columns must be disjoint")
    if not rows:
        raise DataValidationError("CSV has a header but no data rows")

    xs = _column_values(rows, header, spec.x_col)
    ys = _column_values(rows, header, spec.y_col)

    if spec.feature_cols is None:
        reserved = {spec.x_col, spec.y_col, spec.target_col}
        feature_cols = [
            c for c in header
            if c not in reserved and _is_numeric_column(rows, header.index(c))
        ]
        if not feature_cols:
            raise DataValidationError("no numeric feature columns found")
    else:
        feature_cols = list(spec.feature_cols)

    features = [_column_values(rows, header, c) for c in feature_cols]
    ti = header.index(spec.target_col)
    raw_target = []
    for r, row in enumerate(rows):
        if ti >= len(row) or not str(row[ti]).strip():
            raise DataValidationError(
                f"column {spec.target_col!r}: missing value at line {r + 2}"
            )
        raw_target.append(row[ti])

    return _assemble(spec, xs, ys, features, feature_cols, raw_target)


def _load_geojson(spec: IngestSpec) -> Dataset:
    with open(spec.path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"invalid GeoJSON: {exc}") from exc
    if doc.get("type") != "FeatureCollection":
        raise DataValidationError("GeoJSON must be a FeatureCollection")
    features_in = doc.get("features", [])
    if not features_in:
        raise DataValidationError("GeoJSON has no features")

    xs, ys, props = [], [], []
    for i, feature in enumerate(features_in):
        geom = feature.get("geometry") or {}
        if geom.get("type") != "Point":
            raise DataValidationError(
                f"feature {i}: geometry kind {geom.get('type')!r}, only Point is supported"
            )
        coords = geom.get("coordinates", [])
        if len(coords) < 2 or _parse_number(coords[0]) is None or _parse_number(coords[1]) is None:
            raise DataValidationError(f"feature {i}: bad Point coordinates")
        xs.append(float(coords[0]))
        ys.append(float(coords[1]))
        props.append(feature.get("properties") or {})

    if spec.target_col not in props[0]:
        raise DataValidationError(f"property {spec.target_col!r} not found")
    if spec.feature_cols is None:
        feature_cols = [
            key for key in props[0]
            if key != spec.target_col
            and all(_parse_number(p.get(key)) is not None for p in props)
        ]
        if not feature_cols:
            raise DataValidationError("no numeric feature properties found")
    else:
        feature_cols = list(spec.feature_cols)

    features = []
    for col in feature_cols:
        column = []
        bad = []
        for i, p in enumerate(props):
            value = _parse_number(p.get(col))
            if value is None:
                bad.append(i)
            else:
                column.append(value)
        if bad:
            raise DataValidationError(
                f"property {col!r}: missing or non-numeric at features {bad[:20]}"
            )
        features.append(column)

    raw_target = []
    for i, p in enumerate(props):
        if spec.target_col not in p or p[spec.target_col] is None:
            raise DataValidationError(f"property {spec.target_col!r} missing at feature {i}")
        raw_target.append(p[spec.target_col])

    return _assemble(spec, xs, ys, features, feature_cols, raw_target)


def _assemble(spec, xs, ys, features, feature_cols, raw_target) -> Dataset:
    if spec.task == "classification":
        y, class_labels = _map_labels(raw_target)
        y = np.asarray(y, dtype=np.int64)
    else:
        bad = [i for i, v in enumerate(raw_target) if _parse_number(v) is None]
        if bad:
            raise DataValidationError(
                f"target {spec.target_col!r}: non-numeric values at rows {bad[:20]}"
            )
        y = np.asarray([float(v) for v in raw_target])
        class_labels = None

    coords = np.column_stack([xs, ys])
    if spec.geodesic and np.any(np.abs(coords[:, 1]) > 90.0):
        raise DataValidationError("geodesic mode: latitude outside [-90, 90]")
    X = np.column_stack(features) if features else np.empty((len(xs), 0))
    try:
        return Dataset(
            coords=coords,
            X=X,
            y=y,
            feature_names=tuple(feature_cols),
            task=spec.task,
            class_labels=class_labels,
        )
    except Exception as exc:
        raise DataValidationError(str(exc)) from exc


def load_dataset(spec: IngestSpec) -> Dataset:
    """Load and validate a dataset from a CSV or GeoJSON file."""
    if str(spec.path).lower().endswith((".geojson", ".json")):
        return _load_geojson(spec)
    return _load_csv(spec)
