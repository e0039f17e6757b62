"""Downstream evaluation: k-NN accuracy, accuracy curves, GWD-vs-accuracy tables."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import spearmanr

from otfs.dataset import Dataset, SplitSpec, check_features, partition_by_class, train_test_split
from otfs.errors import DataError, InvalidArgumentError
from otfs.gw_select import DEFAULT_CAP, DEFAULT_FLOOR, gw_ranking
from otfs.ot_core import GwConfig
from otfs.select import SelectionConfig, select

Method = Union[SelectionConfig, Callable[[Dataset, int], Sequence[int]]]

# per-repeat split seeds are seed + _REPEAT_STRIDE * repeat
_REPEAT_STRIDE = 1_000_003
_CHUNK_ROWS = 512


def knn_accuracy(train: Dataset, test: Dataset, T, k: int = 5) -> float:
    """Top-1 accuracy of a k-nearest-neighbour vote on the columns ``T``.

    Distances are Euclidean. Equal distances are ordered by train row index
    and a tied vote goes to the class listed first in ``train.class_names``.
    Test labels are matched to train labels by class name.
    """
    if not (train.has_labels and test.has_labels):
        raise DataError("k-NN accuracy needs labels on both sides")
    if k < 1 or k % 2 == 0:
        raise InvalidArgumentError(f"k must be a positive odd integer, got {k}")
    if k > train.n:
        raise InvalidArgumentError(f"k={k} exceeds the {train.n} training rows")
    T = check_features(train, T)
    if test.d != train.d:
        raise DataError("train and test have different numbers of columns")
    code = {name: c for c, name in enumerate(train.class_names)}
    truth = np.array([code.get(test.class_names[y], -1) for y in test.labels])
    Xtr = train.X[:, T]
    Xte = test.X[:, T]
    K = train.n_classes
    correct = 0
    for s in range(0, test.n, _CHUNK_ROWS):
        dist = cdist(Xte[s : s + _CHUNK_ROWS], Xtr)
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        votes = np.zeros((nearest.shape[0], K), dtype=np.int64)
        np.add.at(votes, (np.arange(nearest.shape[0])[:, None], train.labels[nearest]), 1)
        correct += int(np.sum(votes.argmax(axis=1) == truth[s : s + _CHUNK_ROWS]))
    return correct / test.n


def variance_ratio_baseline(ds: Dataset) -> list[tuple[int, float]]:
    """Variance of the class means over the mean within-class variance, per feature.

    Sorted by descending score, ties by ascending index. A constant column
    scores 0.
    """
    parts = partition_by_class(ds)
    means = np.array([ds.X[idx].mean(axis=0) for idx in parts])
    within = np.array([ds.X[idx].var(axis=0) for idx in parts]).mean(axis=0)
    score = means.var(axis=0) / (within + 1e-12)
    return sorted(((j, float(s)) for j, s in enumerate(score)), key=lambda item: (-item[1], item[0]))


def method_name(method: Method) -> str:
    if isinstance(method, SelectionConfig):
        return f"{method.criterion}/{method.strategy}"
    return getattr(method, "__name__", type(method).__name__)


@dataclass
class AccuracyCurve:
    """Accuracy per method, subset size and repeat.

    ``accuracies[i, j, r]`` belongs to ``methods[i]``, ``sizes[j]`` and
    repeat ``r``, which used split seed ``seeds[r]``. ``converged`` is False
    if any GW solve behind a selection stopped on an iteration cap.
    """

    methods: list[str]
    sizes: list[int]
    accuracies: np.ndarray
    n_repeats: int
    seeds: list[int]
    chosen: list[list[list[list[int]]]] = field(default_factory=list)
    converged: bool = True

    def mean(self) -> np.ndarray:
        return self.accuracies.mean(axis=2)

    def std(self) -> np.ndarray:
        return self.accuracies.std(axis=2)

    def long_rows(self) -> list[tuple[str, int, int, float]]:
        """``(method, size, repeat, accuracy)`` records."""
        return [
            (m, size, r, float(self.accuracies[i, j, r]))
            for i, m in enumerate(self.methods)
            for j, size in enumerate(self.sizes)
            for r in range(self.n_repeats)
        ]

    def summary(self) -> list[dict]:
        mean, std = self.mean(), self.std()
        return [
            {"method": m, "size": size, "mean": float(mean[i, j]), "std": float(std[i, j])}
            for i, m in enumerate(self.methods)
            for j, size in enumerate(self.sizes)
        ]


def _choose(method: Method, train: Dataset, sizes: list[int]) -> tuple[list[list[int]], bool]:
    """Feature lists for every size; prefix-consistent strategies run once."""
    if not isinstance(method, SelectionConfig):
        out = []
        for size in sizes:
            feats = [int(j) for j in method(train, size)]
            if len(feats) != size or len(set(feats)) != size:
                raise InvalidArgumentError(f"method returned {feats} for size {size}")
            out.append(feats)
        return out, True
    if method.strategy == "random_search":
        results = [select(train, replace(method, m=size)) for size in sizes]
        return [list(r.chosen) for r in results], all(r.converged for r in results)
    res = select(train, replace(method, m=max(sizes)))
    return [list(res.chosen[:size]) for size in sizes], res.converged


def accuracy_curve(
    ds: Dataset,
    methods: list[Method],
    sizes: list[int],
    n_repeats: int = 10,
    k: int = 5,
    seed: int = 0,
    train_fraction: float = 0.7,
    names: list[str] | None = None,
) -> AccuracyCurve:
    """Repeated-holdout accuracy of each method's selections at each size.

    Every repeat draws one stratified split shared by all methods; methods
    select on its train side and are scored on its test side.

    Parameters
    ----------
    methods : list
        :class:`SelectionConfig` objects (``m`` is overridden per size) or
        callables ``(train, size) -> feature indices``.
    sizes : list of int
        Strictly increasing subset sizes, each at most ``ds.d``.
    """
    if not methods:
        raise InvalidArgumentError("no methods to evaluate")
    sizes = [int(s) for s in sizes]
    if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])) or sizes[0] < 1:
        raise InvalidArgumentError(f"sizes must be positive and strictly increasing, got {sizes}")
    if sizes[-1] > ds.d:
        raise InvalidArgumentError(f"size {sizes[-1]} exceeds d={ds.d}")
    if n_repeats < 1:
        raise InvalidArgumentError("n_repeats must be at least 1")
    names = list(names) if names is not None else [method_name(m) for m in methods]
    if len(names) != len(methods):
        raise InvalidArgumentError("one name per method is required")

    seeds = [seed + _REPEAT_STRIDE * r for r in range(n_repeats)]
    acc = np.zeros((len(methods), len(sizes), n_repeats))
    chosen = [[[] for _ in sizes] for _ in methods]
    converged = True
    for r, s in enumerate(seeds):
        train, test = train_test_split(ds, SplitSpec(train_fraction, s, True))
        for i, method in enumerate(methods):
            feats, ok = _choose(method, train, sizes)
            converged &= ok
            for j, T in enumerate(feats):
                acc[i, j, r] = knn_accuracy(train, test, T, k)
                chosen[i][j].append(T)
    return AccuracyCurve(names, sizes, acc, n_repeats, seeds, chosen, converged)


@dataclass
class GwdAccuracyTable:
    """Paired GW distance and accuracy per subset, with their rank correlation.

    ``spearman`` is None when it is undefined (fewer than two rows, or a
    constant column).
    """

    rows: list[dict]
    spearman: float | None
    converged: bool = True


def gwd_accuracy_table(
    ds: Dataset,
    subsets,
    cfg: GwConfig | None = None,
    k: int = 5,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
    floor: float = DEFAULT_FLOOR,
    train_fraction: float = 0.7,
) -> GwdAccuracyTable:
    """GW distance to the full matrix and k-NN accuracy for each subset.

    One stratified split (seeded by ``seed``) is shared by all subsets; GW
    distances are measured on its train side over one shared row sample.
    """
    subsets = [tuple(check_features(ds, T)) for T in subsets]
    if not subsets:
        raise InvalidArgumentError("no subsets given")
    train, test = train_test_split(ds, SplitSpec(train_fraction, seed, True))
    ranked = gw_ranking(train, subsets, cfg, cap)
    gwd = {}
    for res in ranked:
        gwd.setdefault(res.feature_set, res.gwd)
    rows = []
    for T in subsets:
        g = gwd[T]
        rows.append(
            {
                "subset": list(T),
                "gwd": g,
                "accuracy": knn_accuracy(train, test, T, k),
                "inv_gwd": 1.0 / max(g, floor),
            }
        )
    rho = None
    if len(rows) >= 2:
        inv = [r["inv_gwd"] for r in rows]
        acc = [r["accuracy"] for r in rows]
        if np.ptp(inv) > 0 and np.ptp(acc) > 0:
            rho = float(spearmanr(inv, acc).statistic)
    return GwdAccuracyTable(rows, rho, all(r.converged for r in ranked))
