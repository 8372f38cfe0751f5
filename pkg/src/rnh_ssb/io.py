"""Plain-text outputs: CSV with round-trip floats, JSON reports, run manifests."""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def time_tag(t: float) -> str:
    """File-name friendly time, e.g. ``4.2 -> 't4.2'``."""
    return "t" + repr(float(t)).replace("-", "m")


def write_table(path, header, columns, fmt: str = "csv") -> Path:
    """Write equal-length ``columns`` under ``header``.

    ``fmt='json'`` writes ``{name: [values...]}`` instead of CSV; the file
    suffix is chosen accordingly.
    """
    path = Path(f"{path}.{fmt}")
    cols = [np.asarray(c).tolist() if not isinstance(c, list) else c for c in columns]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        write_json(path, {h: c for h, c in zip(header, cols)})
        return path
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    return path


def read_table(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        return {k: np.asarray(v) for k, v in data.items()}
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path
