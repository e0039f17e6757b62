"""Sample matrices with optional class labels: loading, splitting, synthesis.

Every seeded operation draws from ``numpy.random.default_rng(seed)``, i.e.
the PCG64 bit generator seeded through ``SeedSequence``. Its output stream
is fixed across platforms and numpy releases, so equal seeds give equal data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from otfs.errors import DataError, InvalidArgumentError


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ``n x d`` real matrix with feature names and optional labels.

    ``labels`` holds integer codes into ``class_names`` (first-appearance
    order of the raw labels), or is None for unlabeled data.
    """

    X: np.ndarray
    feature_names: tuple[str, ...] = None
    labels: np.ndarray | None = None
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("X must be an n x d matrix with n, d >= 1")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains non-finite values")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        names = self.feature_names
        if names is None:
            names = tuple(f"f{j}" for j in range(X.shape[1]))
        names = tuple(str(s) for s in names)
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} feature names for {X.shape[1]} columns")
        object.__setattr__(self, "feature_names", names)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64)
            if y.shape != (X.shape[0],):
                raise DataError("labels must have one entry per row")
            if y.size and (y.min() < 0 or y.max() >= len(self.class_names)):
                raise DataError("label codes fall outside class_names")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def rows(self, index) -> "Dataset":
        """Dataset restricted to the given rows, in the given order."""
        index = np.asarray(index, dtype=np.int64)
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.X[index], self.feature_names, labels, self.class_names)

    def columns(self, index) -> "Dataset":
        index = check_features(self, index)
        names = tuple(self.feature_names[j] for j in index)
        return Dataset(self.X[:, index], names, self.labels, self.class_names)

    def with_columns(self, extra: np.ndarray, names) -> "Dataset":
        X = np.hstack([self.X, np.asarray(extra, dtype=float).reshape(self.n, -1)])
        return Dataset(X, self.feature_names + tuple(names), self.labels, self.class_names)


def encode_labels(raw) -> tuple[np.ndarray, tuple[str, ...]]:
    """Integer codes and class names in first-appearance order."""
    names: dict[str, int] = {}
    codes = np.empty(len(raw), dtype=np.int64)
    for i, value in enumerate(raw):
        codes[i] = names.setdefault(str(value), len(names))
    return codes, tuple(names)


def check_features(ds: Dataset, features) -> list[int]:
    """Validate a feature set against ``ds``: distinct, in range, non-empty."""
    idx = [int(j) for j in np.atleast_1d(np.asarray(features, dtype=np.int64))]
    if not idx:
        raise InvalidArgumentError("feature set is empty")
    if len(set(idx)) != len(idx):
        raise InvalidArgumentError(f"feature set has repeated indices: {idx}")
    bad = [j for j in idx if not 0 <= j < ds.d]
    if bad:
        raise InvalidArgumentError(f"feature indices out of range [0, {ds.d}): {bad}")
    return idx


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def load_csv(path, has_header: bool = True, label_column=None) -> Dataset:
    """Read a numeric CSV file, optionally splitting off a label column.

    ``label_column`` may be a header name or a zero-based column index (an
    int, or a string of digits that is not itself a header name).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path} is empty")
    header = None
    if has_header:
        header, rows = [h.strip() for h in rows[0]], rows[1:]
        if not rows:
            raise DataError(f"{path} has a header but no data rows")
    width = len(header) if header is not None else len(rows[0])
    for r, row in enumerate(rows):
        if len(row) != width:
            line = r + (2 if has_header else 1)
            raise DataError(f"{path}: line {line} has {len(row)} fields, expected {width}")

    label_idx = None
    if label_column is not None:
        if header is not None and str(label_column) in header:
            label_idx = header.index(str(label_column))
        elif isinstance(label_column, (int, np.integer)) or str(label_column).isdigit():
            label_idx = int(label_column)
        else:
            raise DataError(f"label column {label_column!r} not found")
        if not 0 <= label_idx < width:
            raise DataError(f"label column index {label_idx} out of range")

    feat_cols = [c for c in range(width) if c != label_idx]
    if not feat_cols:
        raise DataError("no feature columns")
    X = np.empty((len(rows), len(feat_cols)))
    for r, row in enumerate(rows):
        for k, c in enumerate(feat_cols):
            cell = row[c].strip()
            try:
                value = float(cell)
            except ValueError:
                value = np.nan
            if not np.isfinite(value):
                line = r + (2 if has_header else 1)
                col = header[c] if header is not None else str(c)
                raise DataError(f"{path}: cannot parse {cell!r} at line {line}, column {col}")
            X[r, k] = value

    names = [header[c] for c in feat_cols] if header is not None else [f"f{k}" for k in range(len(feat_cols))]
    labels, class_names = None, ()
    if label_idx is not None:
        labels, class_names = encode_labels([row[label_idx].strip() for row in rows])
    return Dataset(X, tuple(names), labels, class_names)


def save_csv(ds: Dataset, path, label_name: str = "label") -> None:
    """Write ``ds`` with a header row; floats carry 17 significant digits."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(ds.feature_names) + ([label_name] if ds.has_labels else [])
        w.writerow(header)
        for i in range(ds.n):
            row = [format(v, ".17g") for v in ds.X[i]]
            if ds.has_labels:
                row.append(ds.class_names[ds.labels[i]])
            w.writerow(row)


# ---------------------------------------------------------------------------
# Class structure, filtering, splitting
# ---------------------------------------------------------------------------


def partition_by_class(ds: Dataset) -> list[np.ndarray]:
    """Ascending row indices of each class, ordered like ``ds.class_names``."""
    if not ds.has_labels:
        raise DataError("dataset has no labels")
    parts = [np.flatnonzero(ds.labels == c) for c in range(ds.n_classes)]
    empty = [ds.class_names[c] for c, idx in enumerate(parts) if idx.size == 0]
    if empty:
        raise DataError(f"classes without samples: {empty}")
    if len(parts) < 2:
        raise DataError("at least two classes are required")
    return parts


def zscore_filter(ds: Dataset, threshold: float = 10.0) -> tuple[Dataset, np.ndarray]:
    """Drop rows with any value more than ``threshold`` stds from its column mean.

    Means and standard deviations come from ``ds`` in a single pass; columns
    with zero spread never trigger removal.
    """
    if not threshold > 0:
        raise InvalidArgumentError("threshold must be positive")
    mean = ds.X.mean(axis=0)
    std = ds.X.std(axis=0)
    dev = np.abs(ds.X - mean)
    flagged = (dev > threshold * std) & (std > 0)
    removed = np.flatnonzero(flagged.any(axis=1))
    if removed.size == ds.n:
        raise DataError("z-score filter would remove every row")
    keep = np.setdiff1d(np.arange(ds.n), removed)
    return ds.rows(keep), removed


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidArgumentError("train_fraction must lie strictly between 0 and 1")


def _n_train(n: int, fraction: float) -> int:
    return int(np.floor(fraction * n + 0.5))


def train_test_split(ds: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Seeded holdout split; rows keep their original order on each side."""
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        parts = partition_by_class(ds)
        small = [ds.class_names[c] for c, idx in enumerate(parts) if idx.size < 2]
        if small:
            raise DataError(f"stratified split needs >= 2 rows per class: {small}")
        train = []
        for idx in parts:
            k = min(max(_n_train(idx.size, spec.train_fraction), 1), idx.size - 1)
            train.append(rng.permutation(idx)[:k])
        train_idx = np.sort(np.concatenate(train))
    else:
        k = _n_train(ds.n, spec.train_fraction)
        if k == 0 or k == ds.n:
            raise InvalidArgumentError(
                f"train fraction {spec.train_fraction} leaves an empty side for n={ds.n}"
            )
        train_idx = np.sort(rng.permutation(ds.n)[:k])
    test_idx = np.setdiff1d(np.arange(ds.n), train_idx)
    return ds.rows(train_idx), ds.rows(test_idx)


def standardize(ds: Dataset) -> Dataset:
    """Center every column and scale it to unit std; constant columns are only centered."""
    mean = ds.X.mean(axis=0)
    std = ds.X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return Dataset((ds.X - mean) / std, ds.feature_names, ds.labels, ds.class_names)


# ---------------------------------------------------------------------------
# Synthetic columns and datasets
# ---------------------------------------------------------------------------


def synth_noise_features(ds: Dataset, count: int, seed: int = 0) -> Dataset:
    """Append ``count`` Gaussian columns matching a random column's mean and std."""
    if count < 1:
        raise InvalidArgumentError("count must be at least 1")
    rng = np.random.default_rng(seed)
    mean = ds.X.mean(axis=0)
    std = ds.X.std(axis=0)
    cols = np.empty((ds.n, count))
    for k in range(count):
        t = rng.integers(ds.d)
        cols[:, k] = mean[t] + std[t] * rng.standard_normal(ds.n)
    return ds.with_columns(cols, [f"noise_{k}" for k in range(count)])


def duplicate_features(ds: Dataset, source, scale: float = 1.0, offset: float = 0.0) -> Dataset:
    """Append ``scale * column + offset`` for every source column."""
    idx = check_features(ds, source)
    if scale == 0:
        raise InvalidArgumentError("scale must be nonzero")
    cols = scale * ds.X[:, idx] + offset
    return ds.with_columns(cols, [ds.feature_names[j] + "_dup" for j in idx])


@dataclass
class PlantedManifest:
    """Ground truth for a planted-relevance dataset."""

    n: int
    n_classes: int
    delta: float
    seed: int
    relevant: list[int] = field(default_factory=list)
    noise: list[int] = field(default_factory=list)
    duplicates: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "generator": "planted",
            "n": self.n,
            "n_classes": self.n_classes,
            "delta": self.delta,
            "seed": self.seed,
            "relevant": self.relevant,
            "noise": self.noise,
            "duplicates": {str(k): v for k, v in self.duplicates.items()},
        }


def make_planted(
    n: int = 500,
    n_classes: int = 2,
    delta: float = 3.0,
    n_relevant: int = 1,
    n_noise: int = 19,
    n_duplicates: int = 0,
    seed: int = 0,
) -> tuple[Dataset, PlantedManifest]:
    """Gaussian classes separated along a few planted columns.

    Rows are assigned to classes round-robin, so class sizes differ by at
    most one. Every column is unit-variance Gaussian noise; in a relevant
    column, class ``c`` is shifted by ``delta * offset[c]`` where ``offset``
    is ``0..K-1`` for the first relevant column and a seeded permutation of
    it for the others. Duplicates are exact copies of the first relevant
    columns, appended last.
    """
    if n < n_classes or n_classes < 1:
        raise InvalidArgumentError("need at least one row per class")
    if n_relevant < 0 or n_noise < 0 or n_relevant + n_noise < 1:
        raise InvalidArgumentError("need at least one relevant or noise column")
    if not 0 <= n_duplicates <= n_relevant:
        raise InvalidArgumentError("n_duplicates must be between 0 and n_relevant")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % n_classes
    X = rng.standard_normal((n, n_relevant + n_noise))
    for j in range(n_relevant):
        offset = np.arange(n_classes) if j == 0 else rng.permutation(n_classes)
        X[:, j] += delta * offset[labels]
    if n_duplicates:
        X = np.hstack([X, X[:, :n_duplicates]])
    names = (
        [f"rel_{j}" for j in range(n_relevant)]
        + [f"noise_{j}" for j in range(n_noise)]
        + [f"rel_{j}_dup" for j in range(n_duplicates)]
    )
    d0 = n_relevant + n_noise
    ds = Dataset(X, tuple(names), labels, tuple(f"c{c}" for c in range(n_classes)))
    manifest = PlantedManifest(
        n=n,
        n_classes=n_classes,
        delta=float(delta),
        seed=seed,
        relevant=list(range(n_relevant)),
        noise=list(range(n_relevant, d0)),
        duplicates={d0 + k: k for k in range(n_duplicates)},
    )
    return ds, manifest
