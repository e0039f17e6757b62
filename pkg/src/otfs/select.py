"""Feature selection strategies over the supervised and unsupervised criteria.

Criteria
--------
``frobenius_supervised``
    Utility of a set is the squared Frobenius norm of its class distance
    matrix; larger is better.
``gw_unsupervised``
    GW distance from the set's view of the data to the full matrix; smaller
    is better.
``two_stage``
    Incremental relevance minus redundancy: single-feature utility minus
    ``lam`` times the scaled similarity to the features already chosen.
``variance_ratio``
    Between-class over within-class variance per feature (rank only).

Every tie goes to the lowest feature index, or for whole subsets to the
lexicographically smallest sorted index list.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from otfs.dataset import Dataset
from otfs.distmat import (
    OtConfig,
    class_distance_matrix,
    frobenius_utility,
    redundancy_to_set,
    single_feature_matrices,
)
from otfs.errors import InvalidArgumentError
from otfs.gw_select import DEFAULT_CAP, gw_between, sample_rows
from otfs.ot_core import GwConfig, pairwise_distances

CRITERIA = ("frobenius_supervised", "gw_unsupervised", "two_stage", "variance_ratio")
STRATEGIES = ("rank", "greedy", "random_search")
_ALIASES = {"frobenius": "frobenius_supervised", "gw": "gw_unsupervised", "two-stage": "two_stage"}


@dataclass(frozen=True)
class SelectionConfig:
    """What to select and how.

    ``standardize`` is applied to every class distance matrix the run
    computes, single columns included, so all sets are measured in the same
    units. ``n_jobs`` only affects speed.
    """

    criterion: str = "frobenius_supervised"
    m: int = 1
    strategy: str = "greedy"
    n_trials: int = 1000
    lam: float = 1.0
    seed: int = 0
    standardize: bool = False
    ot: OtConfig = field(default_factory=OtConfig)
    gw: GwConfig = field(default_factory=GwConfig)
    gw_cap: int = DEFAULT_CAP
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "criterion", _ALIASES.get(self.criterion, self.criterion))
        if self.criterion not in CRITERIA:
            raise InvalidArgumentError(f"unknown criterion {self.criterion!r}; choose from {CRITERIA}")
        if self.strategy not in STRATEGIES:
            raise InvalidArgumentError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.criterion == "two_stage" and self.strategy != "greedy":
            raise InvalidArgumentError("two_stage is an incremental criterion; use strategy 'greedy'")
        if self.criterion == "variance_ratio" and self.strategy != "rank":
            raise InvalidArgumentError("variance_ratio scores single features; use strategy 'rank'")
        if self.m < 1:
            raise InvalidArgumentError("m must be at least 1")
        if self.n_trials < 1:
            raise InvalidArgumentError("n_trials must be at least 1")
        if not self.lam >= 0:
            raise InvalidArgumentError("lam must be nonnegative")
        if self.n_jobs < 1:
            raise InvalidArgumentError("n_jobs must be at least 1")

    @property
    def ot_effective(self) -> OtConfig:
        return replace(self.ot, standardize=self.standardize)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ot"] = self.ot_effective.to_dict()
        out["gw"] = self.gw.to_dict()
        return out


@dataclass
class SelectionResult:
    """Chosen features plus the trace of scores that led to them.

    ``score_trace`` has one record per step (greedy), per trial (random
    search) or per feature (rank).
    """

    chosen: tuple[int, ...]
    chosen_names: tuple[str, ...]
    score_trace: list[dict]
    config: SelectionConfig
    wall_time: float = 0.0
    converged: bool = True
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "chosen": list(self.chosen),
            "chosen_names": list(self.chosen_names),
            "trace": self.score_trace,
            "config": self.config.to_dict(),
            "converged": self.converged,
            "details": self.details,
        }


def _check_m(ds: Dataset, cfg: SelectionConfig):
    if cfg.m > ds.d:
        raise InvalidArgumentError(f"m={cfg.m} exceeds the number of features d={ds.d}")


def _map(fn, items, n_jobs):
    if n_jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


class _Scorer:
    """Set criterion with memoization; ``better(a, b)`` is strict."""

    def __init__(self, ds: Dataset, cfg: SelectionConfig):
        self.ds = ds
        self.cfg = cfg
        self.cache: dict[tuple[int, ...], float] = {}
        self.converged = True
        self.maximize = cfg.criterion == "frobenius_supervised"
        if cfg.criterion == "gw_unsupervised":
            self.rows = sample_rows(ds, cfg.gw_cap, cfg.gw.seed)
            self.full = pairwise_distances(ds.X[self.rows])

    def _compute(self, key):
        if self.maximize:
            return frobenius_utility(class_distance_matrix(self.ds, list(key), self.cfg.ot_effective))
        res = gw_between(self.ds, key, None, self.cfg.gw, self.cfg.gw_cap, self.rows, self.full)
        self.converged &= res.converged
        return res.gwd

    def scores(self, sets) -> list[float]:
        keys = [tuple(sorted(int(j) for j in s)) for s in sets]
        todo = list(dict.fromkeys(k for k in keys if k not in self.cache))
        for k, v in zip(todo, _map(self._compute, todo, self.cfg.n_jobs)):
            self.cache[k] = v
        return [self.cache[k] for k in keys]

    def better(self, a: float, b: float) -> bool:
        return a > b if self.maximize else a < b


def rank_by_disparity(ds: Dataset, cfg: SelectionConfig | None = None) -> list[tuple[int, float]]:
    """Features by descending single-feature utility; ties by ascending index."""
    cfg = cfg or SelectionConfig()
    mats = single_feature_matrices(ds, None, cfg.ot_effective, cfg.n_jobs)
    utility = {j: frobenius_utility(M) for j, M in mats.items()}
    return sorted(utility.items(), key=lambda item: (-item[1], item[0]))


def _rank(ds: Dataset, cfg: SelectionConfig) -> tuple[list[tuple[int, float]], bool]:
    if cfg.criterion == "frobenius_supervised":
        return rank_by_disparity(ds, cfg), True
    if cfg.criterion == "variance_ratio":
        from otfs.evaluation import variance_ratio_baseline

        return variance_ratio_baseline(ds), True
    scorer = _Scorer(ds, cfg)
    gwd = scorer.scores([(j,) for j in range(ds.d)])
    return sorted(enumerate(gwd), key=lambda item: (item[1], item[0])), scorer.converged


def greedy_forward(ds: Dataset, cfg: SelectionConfig) -> SelectionResult:
    """Grow the set one feature at a time, taking the best augmented set."""
    _check_m(ds, cfg)
    start = time.perf_counter()
    scorer = _Scorer(ds, cfg)
    chosen: list[int] = []
    trace = []
    for step in range(cfg.m):
        pool = [f for f in range(ds.d) if f not in chosen]
        scores = scorer.scores([chosen + [f] for f in pool])
        best = 0
        for k in range(1, len(pool)):
            if scorer.better(scores[k], scores[best]):
                best = k
        chosen.append(pool[best])
        trace.append({"step": step, "feature": pool[best], "features": list(chosen), "score": scores[best]})
    return _result(ds, cfg, chosen, trace, start, scorer.converged)


def random_search(ds: Dataset, cfg: SelectionConfig) -> SelectionResult:
    """Best of ``n_trials`` uniformly drawn size-``m`` subsets.

    Trials are drawn from one seeded stream, so the first ``k`` trials of a
    longer run are exactly the trials of a run with ``n_trials = k``.
    """
    _check_m(ds, cfg)
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    subsets = [tuple(sorted(int(j) for j in rng.choice(ds.d, size=cfg.m, replace=False))) for _ in range(cfg.n_trials)]
    scorer = _Scorer(ds, cfg)
    scores = scorer.scores(subsets)
    best = 0
    for t in range(1, len(subsets)):
        s, b = scores[t], scores[best]
        if scorer.better(s, b) or (s == b and subsets[t] < subsets[best]):
            best = t
    trace = [{"trial": t, "features": list(S), "score": s} for t, (S, s) in enumerate(zip(subsets, scores))]
    details = {"best_trial": best, "distinct_subsets": len(scorer.cache)}
    return _result(ds, cfg, list(subsets[best]), trace, start, scorer.converged, details)


def two_stage_select(ds: Dataset, cfg: SelectionConfig) -> SelectionResult:
    """Incremental relevance-minus-redundancy selection.

    At each step the score of a candidate ``f`` is its single-feature
    utility minus ``cfg.lam`` times its maximal scaled similarity to the
    chosen set (zero while the set is empty).
    """
    _check_m(ds, cfg)
    start = time.perf_counter()
    ot = cfg.ot_effective
    mats = single_feature_matrices(ds, None, ot, cfg.n_jobs)
    relevance = {j: frobenius_utility(M) for j, M in mats.items()}
    chosen: list[int] = []
    trace = []
    for step in range(cfg.m):
        best = None
        for f in range(ds.d):
            if f in chosen:
                continue
            red = redundancy_to_set(ds, f, chosen, True, "max", ot, mats) if chosen else 0.0
            score = relevance[f] - cfg.lam * red
            if best is None or score > best[1]:
                best = (f, score, red)
        f, score, red = best
        chosen.append(f)
        trace.append(
            {"step": step, "feature": f, "relevance": relevance[f], "redundancy": red, "score": score}
        )
    return _result(ds, cfg, chosen, trace, start, True)


def select(ds: Dataset, cfg: SelectionConfig) -> SelectionResult:
    """Run the strategy named in ``cfg``."""
    _check_m(ds, cfg)
    if cfg.criterion == "two_stage":
        return two_stage_select(ds, cfg)
    if cfg.strategy == "greedy":
        return greedy_forward(ds, cfg)
    if cfg.strategy == "random_search":
        return random_search(ds, cfg)
    start = time.perf_counter()
    ranked, converged = _rank(ds, cfg)
    trace = [{"rank": r, "feature": f, "score": s} for r, (f, s) in enumerate(ranked)]
    return _result(ds, cfg, [f for f, _ in ranked[: cfg.m]], trace, start, converged)


def _result(ds, cfg, chosen, trace, start, converged, details=None) -> SelectionResult:
    return SelectionResult(
        chosen=tuple(chosen),
        chosen_names=tuple(ds.feature_names[j] for j in chosen),
        score_trace=trace,
        config=cfg,
        wall_time=time.perf_counter() - start,
        converged=bool(converged),
        details=details or {},
    )
