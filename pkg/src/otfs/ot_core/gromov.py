"""Entropic Gromov-Wasserstein between metric measure spaces.

The discrete objective for a coupling ``T`` is

    E(T) = sum_{i,j,k,l} |A[i,k] - B[j,l]|**p * T[i,j] * T[k,l]

with ``A = Dx**q`` and ``B = Dy**q``; the reported distance is
``E(T) ** (1/p)``. ``E`` is a quadratic form in ``T``, so it is minimized by
repeatedly linearizing it at the current coupling and solving the resulting
transport problem with entropic regularization (matrix scaling). The
entropic coupling is then projected exactly onto the marginal constraints
and, unless disabled, refined by conditional-gradient steps on the
unregularized objective with exact line search. For equal-size uniform
spaces the refined coupling is also compared against its nearest
permutation after pairwise-exchange descent.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from otfs.errors import ConvergenceWarning, InvalidArgumentError
from otfs.ot_core.emd import emd_exact
from otfs.ot_core.types import GwConfig, TransportPlan, _as_weights
from otfs.ot_core.wasserstein import _weighted_w1_1d

# largest plan support for which E is summed directly over nonzero pairs
_DIRECT_SUPPORT = 2500
_CHUNK_ENTRIES = 4_000_000
# L1 marginal error at which one scaling solve counts as converged
_SCALING_TOL = 1e-6
# extra passes allowed after the objective settles, for a subproblem still short of tolerance
_GRACE_PASSES = 5


def _check_metric(D, name: str) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] == 0:
        raise InvalidArgumentError(f"{name} must be a non-empty square matrix")
    if not np.all(np.isfinite(D)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.abs(D).max()))
    if np.abs(D - D.T).max() > 1e-9 * scale:
        raise InvalidArgumentError(f"{name} is not symmetric")
    return D


def normalize_metric(D: np.ndarray) -> np.ndarray:
    """Divide by the mean off-diagonal entry; all-zero matrices pass through."""
    n = D.shape[0]
    if n < 2:
        return D
    mean = (D.sum() - np.trace(D)) / (n * (n - 1))
    return D / mean if mean > 0 else D


def _contract(A, B, T, p) -> np.ndarray:
    """``C[i, j] = sum_{k,l} |A[i,k] - B[j,l]|**p * T[k,l]``."""
    if p == 2:
        r = T.sum(axis=1)
        c = T.sum(axis=0)
        return (A**2 @ r)[:, None] + (B**2 @ c)[None, :] - 2.0 * (A @ T @ B.T)
    na, nb = T.shape
    out = np.empty((na, nb))
    step = max(1, _CHUNK_ENTRIES // max(1, na * nb))
    for i in range(na):
        for j0 in range(0, nb, step):
            diff = np.abs(A[i][:, None, None] - B[None, j0 : j0 + step, :])
            if p != 1:
                diff = diff**p
            out[i, j0 : j0 + step] = np.einsum("kjl,kl->j", diff, T)
    return out


def _energy_direct(A, B, T, p) -> float:
    """Sum of the objective over pairs of support cells; no cancellation."""
    I, J = np.nonzero(T)
    t = T[I, J]
    total = 0.0
    step = max(1, _CHUNK_ENTRIES // max(1, t.size))
    for s in range(0, t.size, step):
        block = np.abs(A[np.ix_(I[s : s + step], I)] - B[np.ix_(J[s : s + step], J)])
        if p != 1:
            block = block**p
        total += float(t[s : s + step] @ block @ t)
    return total


def _energy(A, B, T, p) -> float:
    if np.count_nonzero(T) <= _DIRECT_SUPPORT:
        return _energy_direct(A, B, T, p)
    return max(0.0, float(np.sum(_contract(A, B, T, p) * T)))


def gw_objective(Dx, Dy, plan, p: float = 2.0, q: float = 1.0) -> float:
    """Evaluate the (p, q) Gromov-Wasserstein objective of a given coupling.

    ``plan`` may be a :class:`TransportPlan` or a bare coupling matrix. The
    metric matrices are used as given (no normalization).
    """
    Dx = np.asarray(Dx, dtype=float)
    Dy = np.asarray(Dy, dtype=float)
    T = plan.coupling if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    if T.shape != (Dx.shape[0], Dy.shape[0]) or Dx.shape[0] != Dx.shape[1] or Dy.shape[0] != Dy.shape[1]:
        raise InvalidArgumentError(
            f"shape mismatch: plan {T.shape}, Dx {Dx.shape}, Dy {Dy.shape}"
        )
    return _energy(Dx**q, Dy**q, T, p) ** (1.0 / p)


def sinkhorn(a, b, C, epsilon, max_iter=1000, threshold=1e-9):
    """Entropic transport plan for cost ``C`` by alternating matrix scaling.

    Returns ``(plan, converged)``. Runs in the scaling domain with each cost
    row shifted by its minimum; falls back to log-domain updates when the
    kernel under- or overflows.
    """
    plan, converged, _ = _scaling(a, b, np.asarray(C, dtype=float), epsilon, max_iter, threshold)
    return plan, converged


def _scaling(a, b, C, epsilon, max_iter, threshold, g0=None):
    """Matrix scaling from column potential ``g0``; also returns the final potential."""
    K = np.exp(-(C - C.min(axis=1, keepdims=True)) / epsilon)
    v = np.ones(C.shape[1]) if g0 is None else np.exp((g0 - g0.max()) / epsilon)
    converged = False
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for it in range(1, max_iter + 1):
            u = a / (K @ v)
            v = b / (K.T @ u)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                return _scaling_log(a, b, C, epsilon, max_iter, threshold)
            if it % 10 == 0 or it == max_iter:
                if np.abs(u * (K @ v) - a).sum() < threshold:
                    converged = True
                    break
        g = epsilon * np.log(v)
    if not np.all(np.isfinite(g)):
        g = None
    return u[:, None] * K * v[None, :], converged, g


def _scaling_log(a, b, C, epsilon, max_iter, threshold):
    with np.errstate(divide="ignore"):
        loga = np.log(a)
        logb = np.log(b)
    f = np.zeros(C.shape[0])
    g = np.zeros(C.shape[1])
    converged = False
    for it in range(1, max_iter + 1):
        f = epsilon * (loga - logsumexp((g[None, :] - C) / epsilon, axis=1))
        g = epsilon * (logb - logsumexp((f[:, None] - C) / epsilon, axis=0))
        if it % 10 == 0 or it == max_iter:
            plan = np.exp((f[:, None] + g[None, :] - C) / epsilon)
            if np.abs(plan.sum(axis=1) - a).sum() < threshold:
                converged = True
                break
    return np.exp((f[:, None] + g[None, :] - C) / epsilon), converged, None


def round_to_marginals(T, a, b) -> np.ndarray:
    """Project a nonnegative matrix onto the couplings of ``a`` and ``b``.

    Scales rows and then columns down to their targets and spreads the
    remaining deficit as a rank-one correction, so the output has the
    requested marginals up to rounding.
    """
    T = np.array(T, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(T.sum(axis=1) > 0, np.minimum(a / T.sum(axis=1), 1.0), 0.0)
        T *= x[:, None]
        y = np.where(T.sum(axis=0) > 0, np.minimum(b / T.sum(axis=0), 1.0), 0.0)
        T *= y[None, :]
    err_r = a - T.sum(axis=1)
    err_c = b - T.sum(axis=0)
    mass = err_r.sum()
    if mass > 0:
        T += np.outer(err_r, err_c) / mass
    return np.maximum(T, 0.0)


def _polish(A, B, T, a, b, p, tol, max_steps=100):
    """Conditional-gradient descent with exact line search on the quadratic."""
    E = float(np.sum(_contract(A, B, T, p) * T))
    for _ in range(max_steps):
        if E <= 0:
            break
        G = _contract(A, B, T, p)
        _, vertex = emd_exact(np.maximum(G - G.min(), 0.0), a, b)
        S = vertex.coupling
        D = S - T
        slope = 2.0 * float(np.sum(G * D))
        if slope >= -tol * E:
            break
        curv = float(np.sum(_contract(A, B, D, p) * D))
        gamma = 1.0 if curv <= 0 else min(1.0, -slope / (2.0 * curv))
        if gamma > 1.0 - 1e-9:
            gamma = 1.0
        candidate = S if gamma == 1.0 else T + gamma * D
        E_new = float(np.sum(_contract(A, B, candidate, p) * candidate))
        if E_new >= E:
            break
        T, E = candidate, E_new
    return T


def _profile_coupling(A, B, a, b) -> np.ndarray:
    """Optimal coupling for the cost ``W1(A[i, :] under a, B[j, :] under b)``.

    Matching points whose distance profiles agree is the classical lower
    bound for GW; its coupling is a good start for the local iterations.
    """
    na, nb = A.shape[0], B.shape[0]
    ua = np.all(a == a[0])
    ub = np.all(b == b[0])
    if ua and ub:
        grid = np.union1d(np.arange(1, na + 1) * nb, np.arange(1, nb + 1) * na)
        widths = np.diff(grid, prepend=0) / (na * nb)
        qa = np.sort(A, axis=1)[:, -(-grid // nb) - 1] * widths
        qb = np.sort(B, axis=1)[:, -(-grid // na) - 1] * widths
        C = cdist(qa, qb, metric="cityblock")
    else:
        C = np.empty((na, nb))
        for i in range(na):
            for j in range(nb):
                C[i, j] = _weighted_w1_1d(A[i], a, B[j], b)
    _, plan = emd_exact(C, a, b)
    return plan.coupling


def _swap_search(A, B, perm, p, max_passes=20):
    """Pairwise-exchange descent over permutation couplings.

    Conditional gradient stalls at vertices from which the objective is
    concave toward a better neighbour; exchanging the targets of two rows
    visits those neighbours directly. Each pass tries, for every row ``r``,
    the best exchange partner ``s`` and applies it if it lowers the energy.
    """
    if p == 2:
        return _swap_search_sq(A, B, perm, max_passes * perm.size)
    f = (lambda x: np.abs(x)) if p == 1 else (lambda x: np.abs(x) ** p)
    perm = perm.copy()
    n = perm.size
    P = B[np.ix_(perm, perm)]
    L = f(A - P)
    row = L.sum(axis=1)
    idx = np.arange(n)
    tol = 1e-12 * max(1.0, float(L.sum()))
    for _ in range(max_passes):
        improved = False
        for r in range(n):
            F1 = f(A[r][None, :] - P)
            F2 = f(A - P[r][None, :])
            x1 = F1.sum(axis=1) - F1[:, r] - F1[idx, idx]
            x2 = F2.sum(axis=1) - F2[:, r] - F2[idx, idx]
            y1 = row[r] - L[r, r] - L[r, :]
            y2 = row - L[:, r] - L[idx, idx]
            pd = np.diag(P)
            diag = f(A[r, r] - pd) - f(A[r, r] - P[r, r]) + f(np.diag(A) - P[r, r]) - f(np.diag(A) - pd)
            delta = 2.0 * (x1 - y1 + x2 - y2) + diag
            delta[r] = np.inf
            s = int(np.argmin(delta))
            if delta[s] < -tol:
                perm[[r, s]] = perm[[s, r]]
                P[[r, s], :] = P[[s, r], :]
                P[:, [r, s]] = P[:, [s, r]]
                L[[r, s], :] = f(A[[r, s], :] - P[[r, s], :])
                L[:, [r, s]] = f(A[:, [r, s]] - P[:, [r, s]])
                row = L.sum(axis=1)
                improved = True
        if not improved:
            break
    return perm


def _swap_search_sq(A, B, perm, max_swaps):
    """Steepest exchange descent for ``p = 2``.

    With ``P = B[perm][:, perm]`` the energy is ``const - 2 <A, P>``, so the
    gain of every exchange follows from ``M = A @ P`` in closed form.
    """
    perm = perm.copy()
    n = perm.size
    if n < 2:
        return perm
    tol = 1e-12 * max(1.0, float(np.abs(A).sum() * np.abs(B).max()))
    lower = np.tril(np.ones((n, n), dtype=bool))
    dA = np.diag(A).copy()
    P = B[np.ix_(perm, perm)]
    M = A @ P
    for _ in range(max_swaps):
        dM = np.diag(M)
        dP = np.diag(P)
        # <A, P' - P> for exchanging r and s, all pairs at once
        full = M + M.T - dM[:, None] - dM[None, :]
        ends = (dA[:, None] - A) * (P - dP[:, None]) + (A - dA[None, :]) * (dP[None, :] - P)
        diag = (dA[:, None] - dA[None, :]) * (dP[None, :] - dP[:, None])
        gain = 2.0 * (full - ends) + diag
        gain[lower] = -np.inf
        flat = int(np.argmax(gain))
        if gain.flat[flat] <= tol:
            break
        r, t = divmod(flat, n)
        perm[[r, t]] = perm[[t, r]]
        # A @ (swapped P) is a rank-one change of M followed by a column swap
        M += np.outer(A[:, t] - A[:, r], P[r] - P[t])
        P[[r, t], :] = P[[t, r], :]
        P[:, [r, t]] = P[:, [t, r]]
        M[:, [r, t]] = M[:, [t, r]]
    return perm


def _descend(A, B, a, b, T, cfg):
    """Entropic linearization loop, marginal rounding, then refinements."""
    p = cfg.p
    E = float(np.sum(_contract(A, B, T, p) * T))
    converged = False
    g = None
    grace = 0
    for _ in range(cfg.max_outer_iter):
        C = _contract(A, B, T, p)
        # warm-started from the previous potential, so an unfinished solve
        # resumes on the next pass
        T, converged, g = _scaling(a, b, C, cfg.epsilon, cfg.max_sinkhorn_iter, _SCALING_TOL, g)
        E_new = float(np.sum(_contract(A, B, T, p) * T))
        change = abs(E_new - E)
        E = E_new
        if change <= cfg.tol * abs(E) or E <= 0:
            if converged or grace >= _GRACE_PASSES:
                break
            grace += 1
    T = round_to_marginals(T, a, b)
    if cfg.polish:
        T = _polish(A, B, T, a, b, p, cfg.tol)
        if T.shape[0] == T.shape[1] and np.all(a == a[0]) and np.all(b == b[0]):
            # nearest permutation by overlap, then exchange descent from it
            _, cols = linear_sum_assignment(-T)
            perm = _swap_search(A, B, cols, p)
            V = np.zeros_like(T)
            V[np.arange(perm.size), perm] = b[0]
            if _energy(A, B, V, p) <= _energy(A, B, T, p):
                T = V
    return T, converged


def entropic_gw(Dx, Dy, mu=None, nu=None, cfg: GwConfig | None = None, init=None):
    """Approximate (p, q) Gromov-Wasserstein distance and coupling.

    Without ``init`` the descent is run from two starts, the independent
    coupling and the distance-profile matching coupling, and the better
    result is kept. The independent coupling itself is always a candidate,
    so the returned objective never exceeds its value.

    Parameters
    ----------
    Dx, Dy : array-like
        Symmetric intra-space distance matrices, shapes (n_a, n_a), (n_b, n_b).
    mu, nu : array-like, optional
        Probability weights on the two spaces; uniform when omitted.
    cfg : GwConfig, optional
        Solver settings.
    init : array-like, optional
        Single starting coupling, replacing the two default starts.

    Returns
    -------
    value : float
        Unregularized objective ``E(T) ** (1/p)`` at the returned coupling,
        on the normalized metrics when ``cfg.normalize_metrics`` is set.
    plan : TransportPlan
        ``plan.converged`` is False if a descent stopped with its last
        scaling step short of tolerance, in which case a
        :class:`ConvergenceWarning` is also emitted.
    """
    cfg = cfg or GwConfig()
    Dx = _check_metric(Dx, "Dx")
    Dy = _check_metric(Dy, "Dy")
    a = _as_weights(mu, Dx.shape[0], "mu", 1e-9)
    b = _as_weights(nu, Dy.shape[0], "nu", 1e-9)
    if cfg.normalize_metrics:
        Dx = normalize_metric(Dx)
        Dy = normalize_metric(Dy)
    A = Dx**cfg.q
    B = Dy**cfg.q
    p = cfg.p

    independent = np.outer(a, b)
    if init is None:
        starts = [independent, _profile_coupling(A, B, a, b)]
    else:
        starts = [round_to_marginals(np.asarray(init, dtype=float), a, b)]

    best_T, best_E = independent, _energy(A, B, independent, p)
    converged = True
    for start in starts:
        T, ok = _descend(A, B, a, b, start, cfg)
        converged &= ok
        E = _energy(A, B, T, p)
        if E < best_E:
            best_T, best_E = T, E
    if not converged:
        warnings.warn(
            "matrix scaling had not reached tolerance when the descent stopped",
            ConvergenceWarning,
            stacklevel=2,
        )
    return best_E ** (1.0 / p), TransportPlan(best_T, a, b, converged=bool(converged))
