"""CSV loading and histogram math, kept separate from rendering so the
numbers are testable without a figure backend.

Expected schemas (columns by name, extra columns ignored):
    rates.csv        step, arrival_rate, collision_rate, episodes_done
    trajectory csv   step, x, y, phi, v_x, a_x, delta, y_err, phi_err,
                     reward, cost, event
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

DEFAULT_BINS = 61


class SchemaError(ValueError):
    """An input CSV is missing required columns or has no data rows."""


def load_csv_columns(path: str | Path, columns: list[str]) -> dict[str, np.ndarray]:
    """Numeric columns by name; raises SchemaError on anything missing."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing} (has {header})")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    out = {}
    for c in columns:
        out[c] = np.array([float(r[c]) for r in rows])
    return out


def concat_trajectories(paths: list, columns: list[str]) -> dict[str, np.ndarray]:
    if not paths:
        raise SchemaError("no trajectory files given")
    parts = [load_csv_columns(p, columns) for p in paths]
    return {c: np.concatenate([p[c] for p in parts]) for c in columns}


def density_histogram(
    values: np.ndarray, bins: int = DEFAULT_BINS
) -> tuple[np.ndarray, np.ndarray]:
    """Density-normalized histogram; integrates to 1 over its support."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise SchemaError("empty column")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        # constant column: a single spike of unit mass
        width = max(abs(lo) * 1e-6, 1e-9)
        lo, hi = lo - width / 2, hi + width / 2
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    widths = np.diff(edges)
    density = counts / (counts.sum() * widths)
    return density, edges


def histogram_mass(density: np.ndarray, edges: np.ndarray) -> float:
    return float(np.sum(density * np.diff(edges)))
