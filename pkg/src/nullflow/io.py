"""Field snapshot files.

Layout: one magic line, one JSON header line, then the raw little-endian
float64 arrays back to back in header order. Floats in the header are written
with ``repr`` precision, so a save/load round trip is bit exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .background import _LAYOUT, BackgroundFoliation
from .errors import ShapeError
from .sphere import SphereGrid

MAGIC = b"NULLFLOW-FIELDS 1\n"
FORMAT_VERSION = 1


def save_fields(path, grid: SphereGrid, fields: dict, meta: dict | None = None) -> Path:
    path = Path(path)
    entries, blobs = [], []
    for name, arr in fields.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "version": FORMAT_VERSION,
        "grid": grid.to_dict(),
        "layout": {"theta": "cell-centred, half-cell pole offset", "phi": "periodic from 0"},
        "fields": entries,
        "meta": meta or {},
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for b in blobs:
            fh.write(b)
    return path


def load_fields(path):
    """Return ``(grid, fields, meta)`` from a snapshot file."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ShapeError(f"{path}: not a field snapshot")
    end = raw.index(b"\n", len(MAGIC))
    header = json.loads(raw[len(MAGIC) : end])
    grid = SphereGrid(header["grid"]["n_theta"], header["grid"]["n_phi"])
    at = end + 1
    fields = {}
    for e in header["fields"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        if at + 8 * n > len(raw):
            raise ShapeError(f"{path}: truncated data for field {e['name']!r}")
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=at).reshape(e["shape"]).copy()
        fields[e["name"]] = arr
        at += 8 * n
    if at != len(raw):
        raise ShapeError(f"{path}: trailing or missing data")
    return grid, fields, header["meta"]


def save_background(path, bg: BackgroundFoliation) -> Path:
    fields = {"lam": bg.lam}
    fields.update(bg.copy_arrays())
    meta = {"affine": bg.affine, "parameter": bg.parameter, "fields": bg.field_names(), "info": bg.meta}
    return save_fields(path, bg.grid, fields, meta)


def load_background(path) -> BackgroundFoliation:
    grid, fields, meta = load_fields(path)
    lam = fields.pop("lam")
    unknown = set(fields) - set(_LAYOUT)
    if unknown:
        raise ShapeError(f"{path}: unknown background fields {sorted(unknown)}")
    return BackgroundFoliation(
        grid=grid,
        lam=lam,
        affine=bool(meta.get("affine", True)),
        parameter=meta.get("parameter", "lambda"),
        meta=dict(meta.get("info", {})),
        **fields,
    )


def save_scalar(path, grid: SphereGrid, omega, meta=None) -> Path:
    return save_fields(path, grid, {"omega": omega}, meta)


def load_scalar(path, name="omega"):
    grid, fields, meta = load_fields(path)
    if name not in fields:
        raise ShapeError(f"{path}: no field {name!r}")
    return grid, fields[name]
