"""CSV / JSON-lines writers shared by all modules.

Floats are written with 17 significant digits so that files round-trip
bit-exactly and identical runs give byte-identical output.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header: Sequence[str], columns: Sequence[Iterable], footer: Sequence[str] = ()):
    """Write equal-length ``columns`` under ``header``; ``footer`` lines go verbatim at the end."""
    cols = [list(c) for c in columns]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns differ in length")
    lines = [",".join(header)]
    lines.extend(",".join(fmt(c[i]) for c in cols) for i in range(n))
    lines.extend(footer)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV written by :func:`write_csv` (footer lines starting with '#' skipped)."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    header = text[0].split(",")
    rows = [list(map(float, ln.split(","))) for ln in text[1:] if ln and not ln.startswith("#")]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True)


def append_jsonl(path, record: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(record) + "\n")
