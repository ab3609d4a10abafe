"""CSV loading and writing, feature standardization, and synthetic blob data."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .core import Dataset


class CsvParseError(ValueError):
    """A CSV cell or row could not be interpreted."""


def _try_float(cell: str) -> float | None:
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path, label_column="auto") -> Dataset:
    """Read a dataset from CSV.

    The first row is treated as a header when any of its cells is
    non-numeric. ``label_column`` selects the ground-truth column by header
    name or 0-based position; the default "auto" uses a column named
    ``label`` when the header has one, and ``None`` disables labels. Feature
    cells must be finite numbers.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise CsvParseError(f"{path}: no data rows")

    header: list[str] | None = None
    if any(_try_float(cell) is None for cell in rows[0]):
        header = [cell.strip() for cell in rows[0]]
        rows = rows[1:]
        if not rows:
            raise CsvParseError(f"{path}: header but no data rows")

    width = len(rows[0])
    label_idx: int | None = None
    if label_column == "auto":
        if header is not None and "label" in header:
            label_idx = header.index("label")
    elif label_column is None:
        label_idx = None
    elif isinstance(label_column, int):
        if not 0 <= label_column < width:
            raise CsvParseError(f"{path}: label column index {label_column} out of range")
        label_idx = label_column
    else:
        if header is None:
            raise CsvParseError(f"{path}: label column {label_column!r} needs a header row")
        if label_column not in header:
            raise CsvParseError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)

    features: list[list[float]] = []
    labels: list[int] = []
    first_line = 2 if header is not None else 1
    for offset, row in enumerate(rows):
        line_no = first_line + offset
        if len(row) != width:
            raise CsvParseError(f"{path}: line {line_no}: expected {width} cells, got {len(row)}")
        vec = []
        for col, cell in enumerate(row):
            name = header[col] if header is not None else f"column {col}"
            value = _try_float(cell.strip())
            if value is None:
                raise CsvParseError(
                    f"{path}: line {line_no}: cell {cell.strip()!r} in {name} is not numeric"
                )
            if not math.isfinite(value):
                raise CsvParseError(f"{path}: line {line_no}: non-finite value in {name}")
            if col == label_idx:
                if value != int(value):
                    raise CsvParseError(
                        f"{path}: line {line_no}: label {cell.strip()!r} is not an integer"
                    )
                labels.append(int(value))
            else:
                vec.append(value)
        features.append(vec)
    return Dataset(
        instances=np.array(features, dtype=float),
        labels=np.array(labels, dtype=int) if label_idx is not None else None,
    )


def save_csv(dataset: Dataset, path) -> None:
    """Write a dataset with header ``f1..fd[,label]``; floats keep 17
    significant digits so a reload is bit-identical."""
    path = Path(path)
    cols = [f"f{j + 1}" for j in range(dataset.dim)]
    if dataset.labels is not None:
        cols.append("label")
    lines = [",".join(cols)]
    for i in range(dataset.n):
        cells = [f"{v:.17g}" for v in dataset.instances[i]]
        if dataset.labels is not None:
            cells.append(str(int(dataset.labels[i])))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def standardize(dataset: Dataset) -> Dataset:
    """Z-score every column; constant columns become all zeros."""
    x = dataset.instances
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    divisor = np.where(std <= 1e-12, 1.0, std)
    return Dataset(
        instances=(x - mean) / divisor,
        labels=dataset.labels,
        standardized=True,
    )


def make_blobs(k: int, per_cluster: int, dim: int = 2, separation: float = 6.0, seed: int = 0) -> Dataset:
    """Isotropic unit-variance Gaussian blobs with labels attached.

    Centers sit on a circle in the first two feature dimensions (a line when
    dim = 1), spaced so the closest pair of centers is ``separation`` apart.
    """
    if k < 1 or per_cluster < 1 or dim < 1:
        raise ValueError("k, per_cluster and dim must be positive")
    rng = np.random.default_rng(seed)
    centers = np.zeros((k, dim))
    if k > 1:
        if dim == 1:
            centers[:, 0] = separation * np.arange(k)
        else:
            radius = separation / (2.0 * math.sin(math.pi / k))
            theta = 2.0 * math.pi * np.arange(k) / k
            centers[:, 0] = radius * np.cos(theta)
            centers[:, 1] = radius * np.sin(theta)
    points = np.vstack(
        [centers[j] + rng.standard_normal((per_cluster, dim)) for j in range(k)]
    )
    labels = np.repeat(np.arange(1, k + 1), per_cluster)
    return Dataset(instances=points, labels=labels)
