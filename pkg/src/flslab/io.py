"""Plain-text serialisation: CSV tables and flat ``key=value`` blocks.

Floats are written with 17 significant digits so every value round-trips.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(fmt(v) for v in value)
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    return rows[0], rows[1:]


def write_kv(path, items: dict, mode: str = "w") -> None:
    with open(path, mode, encoding="utf-8") as fh:
        for k, v in items.items():
            fh.write(f"{k}={fmt(v)}\n")


def read_kv(path) -> dict[str, str]:
    """Parse a flat ``key=value`` file; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def write_dataset(path, data) -> None:
    header = ["y"] + [f"x{i}" for i in range(data.d)]
    write_csv(path, header, ([yi, *xi] for yi, xi in zip(data.y, data.X)))


def read_dataset(path):
    from .mixture import Dataset

    header, rows = read_csv(path)
    if not header or header[0] != "y":
        raise DataError(f"{path}: first column must be y")
    try:
        arr = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if arr.ndim != 2 or arr.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows")
    return Dataset(arr[:, 1:], arr[:, 0])


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
