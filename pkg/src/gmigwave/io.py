"""Binary container, CSV exports and result logs."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import zipfile
from pathlib import Path

import numpy as np

from .gmig_field import FieldRealization, Grid

CONTAINER_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (tuple, set)):
        return list(obj)
    return str(obj)


def dumps(obj) -> str:
    return json.dumps(obj, default=_jsonable, sort_keys=True)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(dumps(cfg).encode()).hexdigest()[:16]


def save_container(path, header: dict, arrays: dict) -> Path:
    """Write a self-describing .npz: a JSON header plus row-major arrays."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = dict(header)
    head["container_version"] = CONTAINER_VERSION
    head["arrays"] = {k: {"dtype": str(np.asarray(v).dtype), "shape": list(np.shape(v))} for k, v in arrays.items()}
    payload = {"__header__": np.frombuffer(dumps(head).encode(), dtype=np.uint8)}
    payload.update({k: np.ascontiguousarray(v) for k, v in arrays.items()})
    # fixed timestamps keep the file bytes a pure function of the content
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in payload.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            buf = io.BytesIO()
            np.lib.format.write_array(buf, arr, allow_pickle=False)
            zf.writestr(info, buf.getvalue())
    return path


def load_container(path):
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        arrays = {k: data[k] for k in data.files if k != "__header__"}
    return header, arrays


def save_field(path, f: FieldRealization, kind: str = "", seed_label=None) -> Path:
    header = {
        "d": f.grid.d, "N": f.grid.n, "L": f.grid.length, "m": f.m, "delta": f.delta,
        "seed": seed_label if seed_label is not None else _jsonable(f.seed), "kind": kind,
        "vector": f.is_vector,
    }
    return save_container(path, header, {"values": f.values})


def load_field(path) -> FieldRealization:
    header, arrays = load_container(path)
    grid = Grid(header["d"], header["N"], header["L"])
    return FieldRealization(grid=grid, values=arrays["values"], seed=header["seed"],
                            delta=header["delta"], m=header["m"], meta={"kind": header.get("kind", "")})


def export_grid_csv(path, grid: Grid, values: np.ndarray, stride: int = 1) -> Path:
    """Lossy CSV view: node coordinates and Re/Im of each component, subsampled by ``stride``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vals = np.asarray(values)
    comp = vals.shape[grid.d:]
    flat_comp = int(np.prod(comp)) if comp else 1
    ax = grid.axis()
    idx = np.arange(0, grid.n, stride)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        coord_names = ["x", "y", "z"][: grid.d]
        cols = []
        for c in range(flat_comp):
            cols += [f"re{c}", f"im{c}"] if flat_comp > 1 else ["re", "im"]
        w.writerow(coord_names + cols)
        for node in np.ndindex(*([len(idx)] * grid.d)):
            gi = tuple(idx[k] for k in node)
            v = np.ravel(vals[gi]) if comp else [vals[gi]]
            row = [f"{ax[i]:.10g}" for i in gi]
            for z in v:
                row += [f"{np.real(z):.10g}", f"{np.imag(z):.10g}"]
            w.writerow(row)
    return path


def write_farfield_csv(path, records, append: bool = False) -> Path:
    """Columns: kind, seed, xhat components, frequency, part, Re/Im per component."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        header_written = not new
        for rec in records:
            parts = [("p", rec.value[0]), ("s", rec.value[1])] if rec.kind == "elastic" else [("", rec.value)]
            for part, val in parts:
                if val is None:
                    continue
                val = np.asarray(val)
                ncomp = 1 if val.ndim == 1 else val.shape[-1]
                if not header_written:
                    xcols = [f"xhat{k}" for k in range(len(rec.xhat))]
                    vcols = []
                    for c in range(ncomp):
                        vcols += [f"re{c}", f"im{c}"]
                    w.writerow(["kind", "seed"] + xcols + ["frequency", "part"] + vcols)
                    header_written = True
                for j, fr in enumerate(rec.frequency):
                    v = [val[j]] if val.ndim == 1 else list(val[j])
                    row = [rec.kind, rec.seed] + [f"{x:.15g}" for x in rec.xhat] + [f"{fr:.15g}", part]
                    for z in v:
                        row += [f"{z.real:.17g}", f"{z.imag:.17g}"]
                    w.writerow(row)
    return path


def append_rows(path, header: list, rows: list) -> Path:
    """Append rows to a CSV, writing the header if the file is new."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists() or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(header)
        w.writerows(rows)
    return path


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
