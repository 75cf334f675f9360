import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_source
from gmigwave import io as gio
from gmigwave.forward_ops import FarFieldRecord
from gmigwave.gmig_field import Grid


def test_container_round_trip(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "z": (1 + 2j) * np.ones((2, 2, 2)), "i": np.array([1, 2], np.int32)}
    path = gio.save_container(tmp_path / "c.npz", {"note": "x", "n": 3}, arrays)
    header, back = gio.load_container(path)
    assert header["note"] == "x" and header["container_version"] == gio.CONTAINER_VERSION
    assert header["arrays"]["z"] == {"dtype": "complex128", "shape": [2, 2, 2]}
    for k, v in arrays.items():
        np.testing.assert_array_equal(back[k], v)
        assert back[k].dtype == v.dtype


def test_container_bytes_are_deterministic(tmp_path):
    arrays = {"v": np.linspace(0, 1, 7)}
    a = gio.save_container(tmp_path / "a.npz", {"k": 1}, arrays)
    b = gio.save_container(tmp_path / "b.npz", {"k": 1}, arrays)
    assert gio.file_digest(a) == gio.file_digest(b)


@pytest.mark.parametrize("vector", [False, True])
def test_field_round_trip(tmp_path, vector):
    f = random_source(Grid(2, 16, 4.0), 1, 1.5, vector=vector)
    path = gio.save_field(tmp_path / "f.npz", f, kind="acoustic", seed_label={"root": 1})
    g = gio.load_field(path)
    np.testing.assert_array_equal(g.values, f.values)
    assert g.grid == f.grid and g.seed == {"root": 1} and g.is_vector == vector


def test_grid_csv(tmp_path):
    grid = Grid(2, 16, 4.0)
    f = random_source(grid, 2, 1.5)
    path = gio.export_grid_csv(tmp_path / "g.csv", grid, f.values, stride=2)
    rows = gio.read_csv(path)
    assert len(rows) == 64
    assert list(rows[0]) == ["x", "y", "re", "im"]
    assert float(rows[0]["x"]) == -2.0


def test_vector_grid_csv_columns(tmp_path):
    grid = Grid(2, 8, 4.0)
    f = random_source(grid, 2, 1.5, vector=True)
    rows = gio.read_csv(gio.export_grid_csv(tmp_path / "g.csv", grid, f.values))
    assert list(rows[0]) == ["x", "y", "re0", "im0", "re1", "im1"]


def test_farfield_csv(tmp_path):
    scalar = FarFieldRecord("acoustic", np.array([1.0, 0.0]), np.array([1.0, 2.0]), np.array([1 + 1j, 2 - 1j]), seed=0)
    path = gio.write_farfield_csv(tmp_path / "ff.csv", [scalar])
    rows = gio.read_csv(path)
    assert [r["frequency"] for r in rows] == ["1", "2"]
    assert float(rows[1]["im0"]) == -1.0
    u = np.ones((2, 2), dtype=complex)
    el = FarFieldRecord("elastic", np.array([0.0, 1.0]), np.array([1.0, 2.0]), (u, 2 * u), seed=3)
    rows = gio.read_csv(gio.write_farfield_csv(tmp_path / "el.csv", [el]))
    assert [r["part"] for r in rows] == ["p", "p", "s", "s"]
    assert float(rows[-1]["re1"]) == 2.0


def test_append_rows_writes_header_once(tmp_path):
    p = tmp_path / "log.csv"
    gio.append_rows(p, ["a", "b"], [[1, 2]])
    gio.append_rows(p, ["a", "b"], [[3, 4]])
    assert gio.read_csv(p) == [{"a": "1", "b": "2"}, {"a": "3", "b": "4"}]


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=5), st.integers() | st.floats(allow_nan=False), max_size=6))
def test_config_hash_ignores_key_order(d):
    rev = dict(reversed(list(d.items())))
    assert gio.config_hash(d) == gio.config_hash(rev)
    assert len(gio.config_hash(d)) == 16


def test_dumps_numpy_and_complex():
    text = gio.dumps({"a": np.float64(1.5), "b": np.arange(2), "c": 1 + 2j})
    assert text == '{"a": 1.5, "b": [0, 1], "c": [1.0, 2.0]}'
