"""Deterministic CSV/JSON emission and loading.

Floats are written with ``repr`` (shortest round-tripping form), keys are
sorted and line endings fixed, so identical inputs give byte-identical
files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class EmitError(OSError):
    """I/O failure with the offending path attached."""


def _plain(x):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return x


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(header))
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise EmitError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise EmitError(f"{path} is empty")
    data = np.array([[float(v) for v in r] for r in rows[1:]]) if len(rows) > 1 else np.empty((0, len(rows[0])))
    return rows[0], data


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_json(obj), encoding="utf-8")
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc}") from exc
    return path


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise EmitError(f"cannot read {path}: {exc}") from exc


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(directory, name: str = "manifest.json") -> Path:
    """Hash every file under ``directory`` (except the manifest itself)."""
    directory = Path(directory)
    hashes = {
        str(p.relative_to(directory)): file_sha256(p)
        for p in sorted(directory.rglob("*"))
        if p.is_file() and p.name != name
    }
    return write_json(directory / name, hashes)


def write_run_csv(path, run) -> Path:
    """Snapshots of a FlowRun as rows (t, x, r)."""
    def rows():
        for t, pts in zip(run.times, run.curves):
            for x, r in pts:
                yield (t, x, r)

    return write_csv(path, ("t", "x", "r"), rows())
