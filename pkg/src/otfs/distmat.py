"""Class distance matrices: the supervised disparity criterion.

For a feature set ``T`` the matrix ``D[i, j]`` is the 1-Wasserstein distance
between the empirical distributions of classes ``i`` and ``j`` restricted to
the columns in ``T``. Its squared Frobenius norm is the utility of ``T``;
cosine similarity between two matrices' upper triangles measures how alike
two features separate the classes, which is read as redundancy.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from otfs.dataset import Dataset, check_features, partition_by_class
from otfs.errors import DataError, InvalidArgumentError
from otfs.ot_core import WeightedPointCloud, sliced_wasserstein1, wasserstein1_1d, wasserstein1_nd


@dataclass(frozen=True)
class OtConfig:
    """How class-conditional W1 distances are computed.

    Attributes
    ----------
    mode : {"exact", "sliced"}
        Multi-column sets use the exact transport LP or its sliced
        approximation. Single columns always use the exact 1-D formula.
    cap : int
        Per-class row cap for the exact LP; larger classes are subsampled
        once, with a seed derived from ``seed`` and the class position.
    n_projections : int
        Directions for the sliced approximation.
    seed : int
    standardize : bool or None
        Standardize the selected columns (over all rows) before measuring.
        ``None`` means only for multi-column sets.
    """

    mode: str = "exact"
    cap: int = 256
    n_projections: int = 64
    seed: int = 0
    standardize: bool | None = None

    def __post_init__(self):
        if self.mode not in ("exact", "sliced"):
            raise InvalidArgumentError(f"mode must be 'exact' or 'sliced', got {self.mode!r}")
        if self.cap < 1:
            raise InvalidArgumentError("cap must be at least 1")
        if self.n_projections < 1:
            raise InvalidArgumentError("n_projections must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ClassDistanceMatrix:
    """Symmetric ``K x K`` matrix of distances between class distributions."""

    D: np.ndarray
    class_names: tuple[str, ...]
    feature_set: tuple[int, ...] = ()
    ot_config: dict | None = None

    def __post_init__(self):
        D = np.array(self.D, dtype=float)
        K = len(self.class_names)
        if D.shape != (K, K):
            raise InvalidArgumentError(f"matrix shape {D.shape} does not match {K} classes")
        if not np.all(np.isfinite(D)) or np.any(D < 0):
            raise InvalidArgumentError("distances must be finite and nonnegative")
        scale = max(1.0, float(D.max(initial=0.0)))
        if np.abs(D - D.T).max(initial=0.0) > 1e-9 * scale:
            raise InvalidArgumentError("distance matrix is not symmetric")
        if np.any(np.diag(D) != 0):
            raise InvalidArgumentError("distance matrix diagonal must be zero")
        D.setflags(write=False)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))
        object.__setattr__(self, "feature_set", tuple(int(j) for j in self.feature_set))

    @property
    def K(self) -> int:
        return len(self.class_names)

    def upper(self) -> np.ndarray:
        """Strict upper triangle, row by row."""
        return self.D[np.triu_indices(self.K, k=1)]

    def to_dict(self) -> dict:
        return {
            "feature_set": list(self.feature_set),
            "class_names": list(self.class_names),
            "ot_config": self.ot_config,
            "entries": self.D.tolist(),
        }

    @classmethod
    def from_dict(cls, record: dict) -> "ClassDistanceMatrix":
        return cls(
            np.asarray(record["entries"], dtype=float),
            tuple(record["class_names"]),
            tuple(record.get("feature_set", ())),
            record.get("ot_config"),
        )


def _subsample_rows(idx: np.ndarray, cap: int, seed: int, position: int) -> np.ndarray:
    if idx.size <= cap:
        return idx
    rng = np.random.default_rng([seed, position])
    return np.sort(rng.choice(idx, size=cap, replace=False))


def class_distance_matrix(ds: Dataset, T, cfg: OtConfig | None = None) -> ClassDistanceMatrix:
    """W1 distances between every pair of class-conditional distributions on ``T``.

    Examples
    --------
    >>> ds = Dataset(np.array([[0.0], [3.0]]), labels=[0, 1], class_names=("a", "b"))
    >>> class_distance_matrix(ds, [0]).D.tolist()
    [[0.0, 3.0], [3.0, 0.0]]
    """
    cfg = cfg or OtConfig()
    T = check_features(ds, T)
    parts = partition_by_class(ds)
    X = ds.X[:, T]
    standardize = cfg.standardize if cfg.standardize is not None else len(T) > 1
    if standardize:
        std = X.std(axis=0)
        X = (X - X.mean(axis=0)) / np.where(std > 0, std, 1.0)

    K = len(parts)
    D = np.zeros((K, K))
    if len(T) == 1:
        samples = [X[idx, 0] for idx in parts]
        dist = lambda i, j: wasserstein1_1d(samples[i], samples[j])  # noqa: E731
    elif cfg.mode == "exact":
        clouds = [
            WeightedPointCloud(X[_subsample_rows(idx, cfg.cap, cfg.seed, c)])
            for c, idx in enumerate(parts)
        ]
        dist = lambda i, j: wasserstein1_nd(clouds[i], clouds[j], cap=cfg.cap)  # noqa: E731
    else:
        clouds = [WeightedPointCloud(X[idx]) for idx in parts]
        dist = lambda i, j: sliced_wasserstein1(  # noqa: E731
            clouds[i], clouds[j], cfg.n_projections, cfg.seed
        )
    for i in range(K):
        for j in range(i + 1, K):
            D[i, j] = D[j, i] = dist(i, j)
    return ClassDistanceMatrix(D, ds.class_names, tuple(T), cfg.to_dict())


def single_feature_matrices(
    ds: Dataset, features=None, cfg: OtConfig | None = None, n_jobs: int = 1
) -> dict[int, ClassDistanceMatrix]:
    """One-column matrices for each feature, keyed by index in input order.

    With ``n_jobs > 1`` the features are evaluated on a thread pool; the
    result does not depend on the schedule.
    """
    features = list(range(ds.d)) if features is None else check_features(ds, features)
    work = lambda j: class_distance_matrix(ds, [j], cfg)  # noqa: E731
    if n_jobs > 1 and len(features) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            mats = list(pool.map(work, features))
    else:
        mats = [work(j) for j in features]
    return dict(zip(features, mats))


def frobenius_utility(M: ClassDistanceMatrix) -> float:
    """Squared Frobenius norm ``sum_ij D[i, j]**2``."""
    return float(np.sum(M.D * M.D))


def mean_scale(M: ClassDistanceMatrix) -> ClassDistanceMatrix:
    """Divide by the mean off-diagonal entry, so that mean becomes 1.

    Raises
    ------
    DataError
        If every off-diagonal entry is zero.
    """
    mean = M.upper().mean()
    if not mean > 0:
        raise DataError(f"cannot mean-scale an all-zero distance matrix (features {list(M.feature_set)})")
    return ClassDistanceMatrix(M.D / mean, M.class_names, M.feature_set, M.ot_config)


def _check_aligned(Ma: ClassDistanceMatrix, Mb: ClassDistanceMatrix):
    if Ma.class_names != Mb.class_names:
        raise InvalidArgumentError(
            f"class order differs: {list(Ma.class_names)} vs {list(Mb.class_names)}"
        )


def matrix_similarity(Ma: ClassDistanceMatrix, Mb: ClassDistanceMatrix, scaled: bool = True) -> float:
    """Cosine similarity of the two matrices' strict upper triangles.

    ``scaled`` applies :func:`mean_scale` to both first. Cosine is already
    scale-free, so this only changes which inputs are rejected.
    """
    _check_aligned(Ma, Mb)
    if scaled:
        Ma, Mb = mean_scale(Ma), mean_scale(Mb)
    a, b = Ma.upper(), Mb.upper()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DataError("similarity is undefined for an all-zero distance matrix")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def relative_change_matrix(M_before: ClassDistanceMatrix, M_after: ClassDistanceMatrix) -> np.ndarray:
    """Entry-wise ``(after - before) / before`` off the diagonal; zero diagonal."""
    _check_aligned(M_before, M_after)
    K = M_before.K
    off = ~np.eye(K, dtype=bool)
    zero = np.argwhere((M_before.D == 0) & off)
    if zero.size:
        i, j = zero[0]
        raise DataError(
            f"base distance between classes {M_before.class_names[i]!r} and "
            f"{M_before.class_names[j]!r} is zero"
        )
    out = np.zeros((K, K))
    out[off] = (M_after.D[off] - M_before.D[off]) / M_before.D[off]
    return out


def redundancy_to_set(
    ds: Dataset,
    f: int,
    T,
    scaled: bool = True,
    aggregate: str = "max",
    cfg: OtConfig | None = None,
    matrices: dict[int, ClassDistanceMatrix] | None = None,
) -> float:
    """Similarity of feature ``f``'s class-separation pattern to those in ``T``.

    Parameters
    ----------
    aggregate : {"max", "mean"}
        How the per-member similarities are combined.
    matrices : dict, optional
        Precomputed single-feature matrices; missing ones are computed.

    Notes
    -----
    A feature whose matrix is all zero separates no classes and has no
    pattern to share, so any pair involving one contributes similarity 0.
    """
    T = check_features(ds, T)
    f = check_features(ds, [f])[0]
    if f in T:
        raise InvalidArgumentError(f"feature {f} is already in the set")
    if aggregate not in ("max", "mean"):
        raise InvalidArgumentError(f"aggregate must be 'max' or 'mean', got {aggregate!r}")
    matrices = {} if matrices is None else matrices

    def get(j):
        if j not in matrices:
            matrices[j] = class_distance_matrix(ds, [j], cfg)
        return matrices[j]

    Mf = get(f)
    sims = []
    for g in T:
        Mg = get(g)
        if not (Mf.upper().any() and Mg.upper().any()):
            sims.append(0.0)
        else:
            sims.append(matrix_similarity(Mf, Mg, scaled))
    return float(max(sims) if aggregate == "max" else np.mean(sims))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def write_matrix_csv(D: np.ndarray, class_names, path) -> None:
    """``K x K`` CSV with class names as header row and first column."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(class_names))
        for name, row in zip(class_names, np.asarray(D)):
            w.writerow([name] + [format(float(v), ".17g") for v in row])


def read_matrix_csv(path) -> tuple[np.ndarray, tuple[str, ...]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = tuple(rows[0][1:])
    D = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return D, names


def to_json(M: ClassDistanceMatrix) -> str:
    return json.dumps(M.to_dict(), sort_keys=True)
