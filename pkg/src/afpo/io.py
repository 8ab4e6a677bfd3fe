"""CSV readers and writers.

Every table written here starts with one ``#``-prefixed line of ``key=value``
metadata followed by a normal CSV header.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cat_sim import RegionGeo
from .errors import InputError

__all__ = [
    "REGION_HEADER",
    "load_regions",
    "write_regions",
    "write_table",
    "read_table",
    "read_matrix",
    "file_sha256",
]

REGION_HEADER = ["id", "name", "wealth", "cx", "cy"]


def _data_lines(fh) -> Iterable[tuple[int, str]]:
    for lineno, line in enumerate(fh, start=1):
        if line.startswith("#") or not line.strip():
            continue
        yield lineno, line


def load_regions(path) -> list[RegionGeo]:
    """Parse a region file with header ``id,name,wealth,cx,cy``.

    Errors name the offending line number; duplicate ids and non-positive
    wealth are rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: region file not found")
    regions: list[RegionGeo] = []
    seen: dict[str, int] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        lines = list(_data_lines(fh))
    if not lines:
        raise InputError(f"{path}: empty region file")
    header_no, header = lines[0]
    cols = [c.strip() for c in next(csv.reader([header]))]
    if cols != REGION_HEADER:
        raise InputError(f"{path}:{header_no}: expected header {','.join(REGION_HEADER)}, got {header.strip()}")
    for lineno, line in lines[1:]:
        row = next(csv.reader([line]))
        if len(row) != len(REGION_HEADER):
            raise InputError(f"{path}:{lineno}: expected {len(REGION_HEADER)} fields, got {len(row)}")
        rid, name = row[0].strip(), row[1].strip()
        if not rid:
            raise InputError(f"{path}:{lineno}: empty region id")
        try:
            wealth, cx, cy = (float(v) for v in row[2:])
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric wealth or coordinate") from None
        if not all(math.isfinite(v) for v in (wealth, cx, cy)):
            raise InputError(f"{path}:{lineno}: non-finite value")
        if not wealth > 0:
            raise InputError(f"{path}:{lineno}: non-positive wealth {wealth} for region {rid}")
        if rid in seen:
            raise InputError(f"{path}:{lineno}: duplicate region id {rid!r} (first on line {seen[rid]})")
        seen[rid] = lineno
        regions.append(RegionGeo(id=rid, name=name, wealth=wealth, cx=cx, cy=cy))
    if not regions:
        raise InputError(f"{path}: no regions")
    return regions


def _meta_line(meta: dict | None) -> str:
    if not meta:
        return "#\n"
    return "# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> Path:
    """Write a CSV with a metadata comment line; floats keep full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(_meta_line(meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def write_regions(path, regions: Sequence[RegionGeo], meta: dict | None = None) -> Path:
    return write_table(path, REGION_HEADER,
                       ((r.id, r.name, r.wealth, r.cx, r.cy) for r in regions), meta)


def read_table(path) -> tuple[dict, list[str], list[list[str]]]:
    """Return ``(meta, header, rows)`` of a table written by :func:`write_table`."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: file not found")
    meta: dict[str, str] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        text = fh.read().splitlines()
    body = []
    for line in text:
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
        elif line.strip():
            body.append(line)
    if not body:
        raise InputError(f"{path}: no header row")
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def read_matrix(path) -> tuple[list[str], np.ndarray]:
    """Numeric table (e.g. per-scenario residual claims); returns column names and values."""
    _, header, rows = read_table(path)
    try:
        values = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from None
    if values.ndim != 2 or values.shape[1] != len(header):
        raise InputError(f"{path}: ragged rows")
    return header, values


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
