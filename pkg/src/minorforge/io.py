"""JSON schemas for matrices, compounds and fields, plus report writing."""

from __future__ import annotations

import csv
import json
from math import comb
from pathlib import Path

import numpy as np

from .compound import CompoundMatrix
from .dec import FormField, MetricField
from .errors import MinorforgeError
from .reconstruct import CompoundField

SCHEMA_VERSION = "1.0"


class InputError(MinorforgeError, ValueError):
    """Input file missing, malformed, or not matching its schema."""


def load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _require(obj, *keys):
    if not isinstance(obj, dict):
        raise InputError("expected a JSON object")
    missing = [k for k in keys if k not in obj]
    if missing:
        raise InputError(f"missing field(s): {', '.join(missing)}")


def _array(values, shape, what):
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{what}: values are not numeric") from exc
    if arr.size != int(np.prod(shape)):
        raise InputError(f"{what}: expected {int(np.prod(shape))} numbers, got {arr.size}")
    return arr.reshape(shape)


def matrix_from_json(obj) -> np.ndarray:
    _require(obj, "d", "rows")
    d = int(obj["d"])
    return _array(obj["rows"], (d, d), "matrix")


def matrix_to_json(A) -> dict:
    A = np.asarray(A, dtype=float)
    return {"d": A.shape[0], "rows": A.tolist()}


def compound_from_json(obj) -> CompoundMatrix:
    _require(obj, "d", "k", "rows")
    if obj.get("basis", "lex") != "lex":
        raise InputError(f"unsupported basis {obj['basis']!r}")
    d, k = int(obj["d"]), int(obj["k"])
    n = comb(d, k)
    return CompoundMatrix(d, k, _array(obj["rows"], (n, n), "compound"))


def compound_to_json(B: CompoundMatrix) -> dict:
    return {"d": B.d, "k": B.k, "basis": "lex", "rows": B.entries.tolist()}


def _grid(obj):
    grid = tuple(int(n) for n in obj["grid"])
    if any(n <= 0 for n in grid):
        raise InputError("grid sizes must be positive")
    return grid


def compound_field_from_json(obj) -> CompoundField:
    _require(obj, "grid", "d", "k", "values")
    grid, d, k = _grid(obj), int(obj["d"]), int(obj["k"])
    n = comb(d, k)
    values = _array(obj["values"], grid + (n, n), "field")
    mask = None if obj.get("mask") is None else _array(obj["mask"], grid, "mask").astype(bool)
    return CompoundField(grid, d, k, values, mask)


def form_field_from_json(obj) -> FormField:
    _require(obj, "grid", "d", "k", "values")
    grid, d, k = _grid(obj), int(obj["d"]), int(obj["k"])
    if len(grid) != d:
        raise InputError(f"grid has {len(grid)} axes but d={d}")
    return FormField(grid, d, k, _array(obj["values"], grid + (comb(d, k),), "form field"))


def form_field_to_json(w: FormField) -> dict:
    n = int(np.prod(w.grid))
    return {"grid": list(w.grid), "d": w.d, "k": w.k, "values": w.coeffs.reshape(n, -1).tolist()}


def metric_field_from_json(obj) -> MetricField:
    """Metric fields reuse the field layout; ``k`` is ignored when present."""
    _require(obj, "grid", "d", "values")
    grid, d = _grid(obj), int(obj["d"])
    if len(grid) != d:
        raise InputError(f"grid has {len(grid)} axes but d={d}")
    return MetricField(grid, _array(obj["values"], grid + (d, d), "metric field"))


def metric_field_to_json(g: MetricField) -> dict:
    n = int(np.prod(g.grid))
    return {"grid": list(g.grid), "d": g.d, "k": 2, "values": g.values.reshape(n, g.d, g.d).tolist()}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def dumps(report: dict) -> str:
    """Stable serialization: sorted keys, no NaN literals, trailing newline."""
    return json.dumps(_plain(report), sort_keys=True, indent=2) + "\n"


def write_text(path, text: str) -> None:
    Path(path).write_text(text)


def write_csv(path, rows: list[dict]) -> None:
    rows = list(rows)
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in _plain(r).items()})
