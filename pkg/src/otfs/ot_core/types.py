"""Value types carried between the transport solvers."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from otfs.errors import InvalidArgumentError


def _as_weights(weights, n: int, name: str, atol: float) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != (n,):
        raise InvalidArgumentError(f"{name} has length {w.size}, expected {n}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidArgumentError(f"{name} must be finite and nonnegative")
    if abs(w.sum() - 1.0) > atol:
        raise InvalidArgumentError(f"{name} sums to {w.sum()!r}, expected 1")
    return w


@dataclass(frozen=True, eq=False)
class WeightedPointCloud:
    """Empirical measure: ``n`` points in ``d`` dimensions with weights.

    ``weights`` defaults to uniform ``1/n``. A 1-D ``points`` array is read
    as ``n`` points on the real line.
    """

    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InvalidArgumentError("points must be a non-empty n x d array")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("points contain non-finite values")
        object.__setattr__(self, "points", pts)
        object.__setattr__(
            self, "weights", _as_weights(self.weights, pts.shape[0], "weights", 1e-12)
        )

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """A coupling together with the marginals it was solved for.

    ``converged`` is False when the producing solver stopped on an iteration
    cap; the coupling is still feasible but may be far from optimal.
    """

    coupling: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    converged: bool = True

    def marginal_error(self) -> float:
        """Largest absolute deviation of the coupling's sums from its marginals."""
        rows = np.abs(self.coupling.sum(axis=1) - self.row_marginal).max()
        cols = np.abs(self.coupling.sum(axis=0) - self.col_marginal).max()
        return float(max(rows, cols))


@dataclass(frozen=True)
class GwConfig:
    """Settings for the entropic Gromov-Wasserstein solver.

    Attributes
    ----------
    p, q : float
        Exponents of the discrepancy ``|dx**q - dy**q| ** p``.
    epsilon : float
        Entropic regularization of each linearized transport subproblem, in
        units of the (normalized) metric.
    max_outer_iter, max_sinkhorn_iter : int
        Caps on linearization steps and on matrix-scaling sweeps per step.
    tol : float
        Relative objective change that ends the outer loop.
    normalize_metrics : bool
        Divide each metric matrix by its mean off-diagonal entry first.
    seed : int
        Seed for any row subsampling done by callers.
    polish : bool
        Finish with unregularized conditional-gradient steps.
    """

    p: float = 2.0
    q: float = 1.0
    epsilon: float = 0.05
    max_outer_iter: int = 200
    max_sinkhorn_iter: int = 1000
    tol: float = 1e-6
    normalize_metrics: bool = True
    seed: int = 0
    polish: bool = True

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise InvalidArgumentError("p and q must be positive")
        if not self.epsilon > 0:
            raise InvalidArgumentError("epsilon must be positive")
        if not self.tol > 0:
            raise InvalidArgumentError("tol must be positive")
        if self.max_outer_iter < 1 or self.max_sinkhorn_iter < 1:
            raise InvalidArgumentError("iteration caps must be at least 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)
