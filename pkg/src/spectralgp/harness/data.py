"""CSV ingestion, standardization and seeded splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import rng
from ..errors import EmptyDataset, ParseError


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    y_mean: float = 0.0
    x_mean: np.ndarray | None = None
    x_std: np.ndarray | None = None
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.X[idx], self.y[idx], self.feature_names, self.y_mean, self.x_mean, self.x_std, labels, self.meta)


def _parse_float(text: str) -> float | None:
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _resolve(header: list, column) -> int:
    if isinstance(column, int) or (isinstance(column, str) and column.lstrip("-").isdigit() and column not in header):
        idx = int(column)
        if not -len(header) <= idx < len(header):
            raise ParseError(f"target column index {idx} out of range")
        return idx % len(header)
    if column not in header:
        raise ParseError(f"no column named {column!r}")
    return header.index(column)


def standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (X - mean) / std, mean, std


def load_csv(path, target_column, drop=()) -> Dataset:
    """Read a headered CSV into a standardized, target-centered dataset.

    A column whose cells are all non-numeric is categorical: it becomes one
    indicator per sorted category name except the first, the reference level,
    so the indicators never sum to a constant column. A column mixing numbers
    and text raises :class:`ParseError` at the first offending cell. Rows and columns in
    errors are 1-based file coordinates, so the header is row 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        raise EmptyDataset(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise EmptyDataset(f"{path} has a header but no data rows")
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", row=r)
    t = _resolve(header, target_column)
    dropped = {_resolve(header, c) for c in drop}
    columns, names = [], []
    target = None
    for j, name in enumerate(header):
        if j in dropped and j != t:
            continue
        cells = [row[j].strip() for row in body]
        parsed = [_parse_float(c) for c in cells]
        numeric = [v is not None for v in parsed]
        if all(numeric):
            col = np.array(parsed, dtype=float)
        elif not any(numeric) and j != t:
            cats = sorted(set(cells))
            for c in cats[1:]:
                columns.append(np.array([cell == c for cell in cells], dtype=float))
                names.append(f"{name}={c}")
            continue
        else:
            r = numeric.index(False) + 2
            raise ParseError(f"non-numeric value {cells[r - 2]!r} in numeric column {name!r}", row=r, column=j + 1)
        if j == t:
            target = col
        else:
            columns.append(col)
            names.append(name)
    if not columns:
        raise EmptyDataset("no feature columns")
    X, x_mean, x_std = standardize(np.column_stack(columns))
    y_mean = float(target.mean())
    return Dataset(X, target - y_mean, names, y_mean, x_mean, x_std, meta={"source": str(path)})


def split_indices(n: int, train_ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded permutation split; both parts non-empty when ``n >= 2``."""
    if not 0 < train_ratio < 1:
        raise ValueError(f"split ratio must lie in (0, 1), got {train_ratio}")
    perm = rng.generator(seed, "split").permutation(n)
    cut = min(max(int(round(train_ratio * n)), 1), n - 1) if n >= 2 else n
    return np.sort(perm[:cut]), np.sort(perm[cut:])


def split(ds: Dataset, train_ratio: float, seed: int) -> tuple[Dataset, Dataset]:
    tr, te = split_indices(ds.n, train_ratio, seed)
    train, test = ds.subset(tr), ds.subset(te)
    # re-center on the training targets only
    shift = float(train.y.mean())
    return (
        Dataset(train.X, train.y - shift, ds.feature_names, ds.y_mean + shift, ds.x_mean, ds.x_std, train.labels, ds.meta),
        Dataset(test.X, test.y - shift, ds.feature_names, ds.y_mean + shift, ds.x_mean, ds.x_std, test.labels, ds.meta),
    )


def synthetic_regression(b: int, d: int, a: float = 1.0, scale: float = 1.0, lengthscale: float = 1.0, noise_std: float = 0.1, seed: int = 0) -> Dataset:
    """Cluster-compliant inputs with targets drawn from the SE-kernel GP prior."""
    from ..clustergen import cluster_sizes, generate, lambda_for_a
    from ..kernel import HyperParams, gram
    from ..numerics import sym_eigen

    n = sum(cluster_sizes(b, scale))
    lam = lambda_for_a(n, a)
    ds = generate(b, d, lam, lengthscale, seed, scale)
    K = gram(ds.X, HyperParams.create(ds.spec.lengthscales, 1.0))
    w, V = sym_eigen(K)
    f = V @ (np.sqrt(np.clip(w, 0.0, None)) * rng.standard_normal(seed, "synthetic-f", 0, n))
    y = f + noise_std * rng.standard_normal(seed, "synthetic-noise", 0, n)
    y_mean = float(y.mean())
    names = [f"x_{j + 1}" for j in range(d)]
    meta = {"b": b, "d": d, "a": a, "lambda": lam, "scale": scale, "seed": seed, "noise_std": noise_std}
    return Dataset(ds.X, y - y_mean, names, y_mean, labels=ds.labels, meta=meta)
