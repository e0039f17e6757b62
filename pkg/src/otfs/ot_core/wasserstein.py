"""1-Wasserstein distances between empirical measures."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from otfs.errors import InvalidArgumentError
from otfs.ot_core.emd import emd_exact
from otfs.ot_core.types import WeightedPointCloud


def _samples(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidArgumentError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def wasserstein1_1d(a, b) -> float:
    """Exact W1 between two uniform empirical measures on the line.

    Integrates ``|Q_a(t) - Q_b(t)|`` over ``t`` in (0, 1]. Both quantile
    functions are step functions with jumps at multiples of ``1/n_a`` and
    ``1/n_b``; those breakpoints are merged on the integer grid
    ``{0, ..., n_a * n_b}`` so unequal sample counts are handled exactly.
    """
    xa = np.sort(_samples(a, "a"))
    xb = np.sort(_samples(b, "b"))
    na, nb = xa.size, xb.size
    if na == nb:
        return float(np.abs(xa - xb).sum() / na)
    # breakpoint k on the merged grid is t = k / (na * nb)
    grid = np.union1d(np.arange(1, na + 1) * nb, np.arange(1, nb + 1) * na)
    widths = np.diff(grid, prepend=0)
    ia = -(-grid // nb) - 1  # ceil(t * na) - 1
    ib = -(-grid // na) - 1
    return float(np.sum(widths * np.abs(xa[ia] - xb[ib])) / (na * nb))


def _weighted_w1_1d(xa, wa, xb, wb) -> float:
    """W1 on the line for weighted samples, via the CDF-difference integral."""
    values = np.concatenate([xa, xb])
    order = np.argsort(values, kind="stable")
    values = values[order]
    mass = np.concatenate([wa, -wb])[order]
    cdf_gap = np.cumsum(mass)[:-1]
    return float(np.sum(np.abs(cdf_gap) * np.diff(values)))


def _check_clouds(A: WeightedPointCloud, B: WeightedPointCloud):
    if A.dim != B.dim:
        raise InvalidArgumentError(f"dimension mismatch: {A.dim} vs {B.dim}")


def _cloud_key(c: WeightedPointCloud):
    return (c.n, c.points.tobytes(), c.weights.tobytes())


def wasserstein1_nd(
    A: WeightedPointCloud, B: WeightedPointCloud, cap: int = 256, seed: int = 0
) -> float:
    """Exact W1 under the Euclidean ground metric, subsampling above ``cap``.

    A cloud larger than ``cap`` is replaced by ``cap`` of its points drawn
    uniformly without replacement (weights renormalized); smaller clouds are
    used whole. The result is deterministic given ``seed`` and exactly
    symmetric in its arguments.
    """
    _check_clouds(A, B)
    if cap < 1:
        raise InvalidArgumentError("cap must be at least 1")
    # canonical argument order makes the float result exactly symmetric
    if _cloud_key(A) > _cloud_key(B):
        A, B = B, A
    rng = np.random.default_rng(seed)
    pa, wa = _subsample(A, cap, rng)
    pb, wb = _subsample(B, cap, rng)
    value, _ = emd_exact(cdist(pa, pb), wa, wb)
    return value


def _subsample(c: WeightedPointCloud, cap: int, rng: np.random.Generator):
    if c.n <= cap:
        return c.points, c.weights
    idx = np.sort(rng.choice(c.n, size=cap, replace=False))
    w = c.weights[idx]
    total = w.sum()
    w = w / total if total > 0 else np.full(cap, 1.0 / cap)
    return c.points[idx], w


def random_directions(dim: int, n_projections: int, seed: int) -> np.ndarray:
    """Unit vectors drawn uniformly on the sphere, one per row."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n_projections, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return g / norms


def sliced_wasserstein1(
    A: WeightedPointCloud, B: WeightedPointCloud, n_projections: int = 64, seed: int = 0
) -> float:
    """Average 1-D W1 of the clouds projected onto random unit directions."""
    _check_clouds(A, B)
    if n_projections < 1:
        raise InvalidArgumentError("n_projections must be at least 1")
    dirs = random_directions(A.dim, n_projections, seed)
    pa = A.points @ dirs.T
    pb = B.points @ dirs.T
    uniform = A.is_uniform and B.is_uniform
    total = 0.0
    for k in range(n_projections):
        if uniform:
            total += wasserstein1_1d(pa[:, k], pb[:, k])
        else:
            total += _weighted_w1_1d(pa[:, k], A.weights, pb[:, k], B.weights)
    return total / n_projections


def pairwise_distances(X) -> np.ndarray:
    """Euclidean distance matrix between the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgumentError("X must be a non-empty 2-D array")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("X contains non-finite values")
    if X.shape[0] == 1:
        return np.zeros((1, 1))
    return squareform(pdist(X, metric="euclidean"))
