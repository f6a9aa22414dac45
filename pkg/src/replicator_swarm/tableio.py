"""Deterministic text writers for trajectories and event logs."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def header_line(meta: dict) -> str:
    # insertion order is part of the output contract
    return "# " + ", ".join(f"{k}={_header_value(v)}" for k, v in meta.items())


def _header_value(v) -> str:
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(v, sort_keys=True, separators=(",", ":"))
    return str(v)


def write_table(path, meta: dict, columns, rows, fmt: str = "csv") -> Path:
    """Write ``rows`` (2-D, mixed int/float allowed) as CSV or JSON.

    Floats are written with ``repr`` so a round trip is exact and identical
    inputs give byte-identical files.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        lines = [header_line(meta), ",".join(columns)]
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "json":
        doc = {
            "meta": json.loads(json.dumps(meta, default=str)),
            "columns": list(columns),
            "rows": [[_json_value(v) for v in row] for row in rows],
        }
        path.write_text(json.dumps(doc, separators=(",", ":")) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def _json_value(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


def read_table(path):
    """Inverse of :func:`write_table` for CSV files; returns (header, columns, array)."""
    lines = Path(path).read_text().splitlines()
    header = lines[0][2:] if lines and lines[0].startswith("# ") else ""
    columns = lines[1].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[2:]])
    return header, columns, data
