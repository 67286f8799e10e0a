"""Matrix <-> JSON conversion and CSV output.

Matrices are nested row-major lists whose entries are ``[re, im]`` pairs.
Python's float ``repr`` is the shortest string that round-trips, so JSON
written here reloads bit-identically. CSV floats use 17 significant digits.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ValidationError


def complex_to_json(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def _entry(value, field):
    if isinstance(value, bool):
        raise ValidationError(field, "expected a number or [re, im] pair, got a boolean")
    if isinstance(value, (int, float)):
        return complex(float(value), 0.0)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in value
    ):
        return complex(float(value[0]), float(value[1]))
    raise ValidationError(field, f"expected a number or [re, im] pair, got {value!r}")


def matrix_to_json(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[complex_to_json(z) for z in row] for row in a]


def matrix_from_json(obj, field="matrix", dim=None) -> np.ndarray:
    if not isinstance(obj, (list, tuple)) or not obj:
        raise ValidationError(field, "expected a non-empty list of rows")
    rows = []
    for i, row in enumerate(obj):
        if not isinstance(row, (list, tuple)):
            raise ValidationError(f"{field}[{i}]", "expected a row list")
        rows.append([_entry(v, f"{field}[{i}][{j}]") for j, v in enumerate(row)])
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ValidationError(field, "matrix must be square")
    if dim is not None and n != dim:
        raise ValidationError(field, f"matrix is {n}x{n}, expected {dim}x{dim}")
    arr = np.array(rows, dtype=complex)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(field, "entries must be finite")
    return arr


def vector_from_json(obj, field="vector", dim=None) -> np.ndarray:
    if not isinstance(obj, (list, tuple)) or not obj:
        raise ValidationError(field, "expected a non-empty list")
    arr = np.array([_entry(v, f"{field}[{i}]") for i, v in enumerate(obj)], dtype=complex)
    if dim is not None and arr.shape[0] != dim:
        raise ValidationError(field, f"expected {dim} components, got {arr.shape[0]}")
    return arr


def format_float(x) -> str:
    x = float(x) + 0.0  # folds -0.0 into 0.0
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def write_csv(path, rows, columns) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [format_float(row[c]) if isinstance(row[c], float) else row[c] for c in columns]
            )
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n", encoding="utf-8")
    return path
