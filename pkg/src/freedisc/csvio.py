"""Two-column ``t,value`` CSV files for grid signals."""

from __future__ import annotations

import csv

import numpy as np

from .functional import GridSignal

HEADER = ("t", "value")


def fmt(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return f"{float(x):.17g}"


def read_signal(path, rtol: float = 1e-9) -> GridSignal:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(c.strip() for c in rows[0]) != HEADER:
        raise ValueError(f"{path}: expected header 't,value'")
    data = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    if any(len(r) != 2 for r in data):
        raise ValueError(f"{path}: every row needs exactly two columns")
    try:
        arr = np.array([[float(a), float(b)] for a, b in data])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from None
    if arr.shape[0] < 2:
        raise ValueError(f"{path}: need at least two samples")
    t, v = arr[:, 0], arr[:, 1]
    h = (t[-1] - t[0]) / (t.size - 1)
    if not h > 0 or np.max(np.abs(np.diff(t) - h)) > rtol * max(abs(h), 1.0) * 1e3:
        raise ValueError(f"{path}: t must be uniformly spaced and increasing")
    return GridSignal(v, h, t[0])


def write_signal(path, u: GridSignal):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for t, v in zip(u.t, u.values):
            w.writerow((fmt(t), fmt(v)))
