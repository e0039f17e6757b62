"""Unsupervised criterion: Gromov-Wasserstein distance between data views.

Rows of the data matrix are points; a feature subset ``T`` gives them the
Euclidean metric of ``X[:, T]``. A subset that preserves the geometry of the
full matrix is close to it in the GW sense, and a feature whose removal
barely changes the geometry of its set is redundant.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from otfs.dataset import Dataset, check_features
from otfs.errors import ConvergenceWarning, InvalidArgumentError
from otfs.ot_core import GwConfig, entropic_gw, pairwise_distances

DEFAULT_CAP = 300
DEFAULT_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class GwCriterionResult:
    """GW distance from the view on ``feature_set`` to a reference view.

    ``reference`` is None for the full data matrix. ``converged`` is False
    when the solver stopped on an iteration cap.
    """

    gwd: float
    feature_set: tuple[int, ...]
    n_used: int
    config: GwConfig
    converged: bool = True
    reference: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "feature_set": list(self.feature_set),
            "reference": None if self.reference is None else list(self.reference),
            "gwd": self.gwd,
            "n_used": self.n_used,
            "converged": self.converged,
            "config_hash": config_hash(self.config),
        }


def config_hash(cfg: GwConfig) -> str:
    """Short stable digest of a solver configuration."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def sample_rows(ds: Dataset, cap: int = DEFAULT_CAP, seed: int = 0) -> np.ndarray:
    """Row indices used by every GW comparison on ``ds``.

    Rows are put in lexicographic order of their values before the seeded
    draw, so the chosen sample (as a set of rows) does not depend on the
    order rows appear in the file.
    """
    if cap < 2:
        raise InvalidArgumentError("cap must be at least 2")
    order = np.lexsort(ds.X.T[::-1])
    if ds.n <= cap:
        return order
    rng = np.random.default_rng(seed)
    return order[np.sort(rng.choice(ds.n, size=cap, replace=False))]


def _solve(Da, Db, cfg):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        value, plan = entropic_gw(Da, Db, cfg=cfg)
    for w in caught:
        if not issubclass(w.category, ConvergenceWarning):
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    return value, plan.converged


def gw_between(
    ds: Dataset,
    T,
    reference=None,
    cfg: GwConfig | None = None,
    cap: int = DEFAULT_CAP,
    rows: np.ndarray | None = None,
    reference_metric: np.ndarray | None = None,
) -> GwCriterionResult:
    """GW distance between the views on ``T`` and on ``reference`` (all columns if None)."""
    cfg = cfg or GwConfig()
    T = tuple(check_features(ds, T))
    ref = None if reference is None else tuple(check_features(ds, reference))
    if rows is None:
        rows = sample_rows(ds, cap, cfg.seed)
    X = ds.X[rows]
    Da = pairwise_distances(X[:, list(T)])
    if reference_metric is None:
        reference_metric = pairwise_distances(X if ref is None else X[:, list(ref)])
    value, converged = _solve(Da, reference_metric, cfg)
    return GwCriterionResult(value, T, len(rows), cfg, converged, ref)


def gw_to_full(ds: Dataset, T, cfg: GwConfig | None = None, cap: int = DEFAULT_CAP) -> GwCriterionResult:
    """GW distance from the submatrix on ``T`` to the full data matrix."""
    return gw_between(ds, T, None, cfg, cap)


def feature_redundancy_gw(
    ds: Dataset,
    T,
    f: int,
    cfg: GwConfig | None = None,
    cap: int = DEFAULT_CAP,
    floor: float = DEFAULT_FLOOR,
) -> float:
    """Reciprocal GW distance between the views on ``T`` without ``f`` and on ``T``.

    Saturates at ``1 / floor`` when dropping ``f`` leaves the geometry intact.
    """
    T = check_features(ds, T)
    if f not in T:
        raise InvalidArgumentError(f"feature {f} is not in the set {T}")
    if len(T) < 2:
        raise InvalidArgumentError("the set must have at least two features")
    if not floor > 0:
        raise InvalidArgumentError("floor must be positive")
    rest = [j for j in T if j != f]
    res = gw_between(ds, rest, T, cfg, cap)
    return 1.0 / max(res.gwd, floor)


def gw_ranking(
    ds: Dataset,
    candidates,
    cfg: GwConfig | None = None,
    cap: int = DEFAULT_CAP,
    n_jobs: int = 1,
) -> list[GwCriterionResult]:
    """Candidates in ascending order of GW distance to the full matrix.

    All candidates share one row sample. Equal distances keep the input
    order.
    """
    cfg = cfg or GwConfig()
    candidates = [tuple(check_features(ds, T)) for T in candidates]
    if not candidates:
        raise InvalidArgumentError("no candidate feature sets")
    rows = sample_rows(ds, cap, cfg.seed)
    full = pairwise_distances(ds.X[rows])
    work = lambda T: gw_between(ds, T, None, cfg, cap, rows, full)  # noqa: E731
    if n_jobs > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(work, candidates))
    else:
        results = [work(T) for T in candidates]
    return sorted(results, key=lambda r: r.gwd)


def write_jsonl(results, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
