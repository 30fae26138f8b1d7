"""Deterministic JSON / CSV writers (17 significant digits, stable key order)."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        # JSON has no inf/nan; null keeps files parseable
        return "null"
    s = FLOAT_FMT % x
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return _encode([float(obj.real), float(obj.imag)], indent, level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number, bool)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2) -> str:
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def complex_matrix_to_pairs(m):
    """Nested lists of [re, im] pairs."""
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.atleast_2d(m)]


def pairs_to_complex_matrix(pairs):
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError("expected a nested list of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "nan" if not math.isfinite(float(v)) else FLOAT_FMT % float(v)
    return v


def write_csv(path, header, rows):
    Path(path).write_text(csv_text(header, rows))
