import json

import numpy as np
import pytest

from galax.dataio import IngestSpec, load_dataset
from galax.errors import DataValidationError


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def make_csv(tmp_path, n=12, name="data.csv", target="price", extra_col=None):
    rng = np.random.default_rng(0)
    lines = ["lon,lat,{},beds".format(target) + ("," + extra_col if extra_col else "")]
    for i in range(n):
        row = f"{rng.random():.6f},{rng.random():.6f},{100 + i},{i % 4 + 1}"
        if extra_col:
            row += f",note{i}"
        lines.append(row)
    return write_csv(tmp_path / name, "\n".join(lines) + "\n")


def test_csv_happy_path(tmp_path):
    path = make_csv(tmp_path)
    ds = load_dataset(IngestSpec(path, "lon", "lat", "price"))
    assert ds.n == 12
    assert ds.feature_names == ("beds",)
    assert ds.task == "regression"
    assert ds.y[0] == 100.0


def test_three_row_csv_loads(tmp_path):
    path = make_csv(tmp_path, n=3)
    ds = load_dataset(IngestSpec(path, "lon", "lat", "price"))
    assert ds.n == 3
    assert ds.d == 1
    assert ds.y.tolist() == [100.0, 101.0, 102.0]


def test_csv_non_numeric_columns_excluded_from_default_features(tmp_path):
    path = make_csv(tmp_path, extra_col="comment")
    ds = load_dataset(IngestSpec(path, "lon", "lat", "price"))
    assert ds.feature_names == ("beds",)


def test_csv_missing_column(tmp_path):
    path = make_csv(tmp_path)
    with pytest.raises(DataValidationError) as err:
        load_dataset(IngestSpec(path, "lon", "lat", "missing_target"))
    assert "missing_target" in str(err.value)


def test_csv_empty_feature_cell_names_line(tmp_path):
    text = "lon,lat,price,beds\n0.1,0.2,100,2\n0.3,0.4,101,\n0.5,0.6,102,3\n" \
           + "\n".join(f"0.{i},0.{i},10{i},1" for i in range(3, 12)) + "\n"
    path = write_csv(tmp_path / "hole.csv", text)
    with pytest.raises(DataValidationError) as err:
        load_dataset(IngestSpec(path, "lon", "lat", "price", feature_cols=("beds",)))
    assert "3" in str(err.value)  # 1-based file line of the empty cell
    assert "beds" in str(err.value)


def test_csv_non_finite_rejected(tmp_path):
    text = "lon,lat,price,beds\n" + "\n".join(
        f"0.{i},0.{i},1{i},inf" if i == 4 else f"0.{i},0.{i},1{i},2"
        for i in range(1, 13)
    ) + "\n"
    path = write_csv(tmp_path / "inf.csv", text)
    with pytest.raises(DataValidationError):
        load_dataset(IngestSpec(path, "lon", "lat", "price", feature_cols=("beds",)))


def test_csv_classification_label_mapping_first_appearance(tmp_path):
    rows = ["x,y,kind,f"]
    kinds = ["oak", "pine", "oak", "birch", "pine", "oak", "birch", "pine",
             "oak", "pine", "birch", "oak"]
    for i, kind in enumerate(kinds):
        rows.append(f"{i * 0.1:.1f},{(i % 5) * 0.2:.1f},{kind},{i}")
    path = write_csv(tmp_path / "classes.csv", "\n".join(rows) + "\n")
    ds = load_dataset(IngestSpec(path, "x", "y", "kind", task="classification"))
    assert ds.class_labels == ("oak", "pine", "birch")
    assert ds.y[:5].tolist() == [0, 1, 0, 2, 1]


def test_geojson_points(tmp_path):
    rng = np.random.default_rng(1)
    features = []
    for i in range(11):
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point",
                         "coordinates": [float(rng.random()), float(rng.random())]},
            "properties": {"value": float(i), "size": float(i % 3)},
        })
    path = tmp_path / "pts.geojson"
    path.write_text(json.dumps({"type": "FeatureCollection", "features": features}))
    ds = load_dataset(IngestSpec(str(path), target_col="value"))
    assert ds.n == 11
    assert ds.feature_names == ("size",)


def test_geojson_polygon_rejected(tmp_path):
    doc = {
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature",
             "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [1, 0], [1, 1]]]},
             "properties": {"value": 1.0}},
        ],
    }
    path = tmp_path / "poly.geojson"
    path.write_text(json.dumps(doc))
    with pytest.raises(DataValidationError) as err:
        load_dataset(IngestSpec(str(path), target_col="value"))
    assert "Polygon" in str(err.value)


def test_geodesic_latitude_validated(tmp_path):
    text = "lon,lat,price,beds\n" + "\n".join(
        f"{i},{i * 20},{100 + i},2" for i in range(12)
    ) + "\n"
    path = write_csv(tmp_path / "latbad.csv", text)
    with pytest.raises(DataValidationError):
        load_dataset(IngestSpec(path, "lon", "lat", "price", geodesic=True))


def test_overlapping_columns_rejected(tmp_path):
    path = make_csv(tmp_path)
    with pytest.raises(DataValidationError):
        load_dataset(IngestSpec(path, "lon", "lat", "lat"))
