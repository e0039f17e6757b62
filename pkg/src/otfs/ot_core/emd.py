"""Exact earth mover's distance by the transportation network simplex.

The transportation problem between ``m`` sources and ``n`` sinks is solved on
its bipartite network. A basis is a spanning tree of ``m + n - 1`` cells;
dual potentials ``u_i + v_j = c_ij`` hold on tree cells, and a cell with
negative reduced cost enters the tree while the blocking cell on the created
cycle leaves. Entering cells are picked by most negative reduced cost and
leaving cells by smallest flow; every tie goes to the lowest flattened cell
index. After a long run of degenerate pivots the entering rule drops to
Bland's (first negative cell), which cannot cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from otfs.errors import InvalidArgumentError
from otfs.ot_core.types import TransportPlan


@dataclass
class SimplexSolution:
    """Raw network-simplex output, including the dual certificate."""

    flow: np.ndarray
    u: np.ndarray
    v: np.ndarray
    value: float
    n_pivots: int


def _initial_basis(cost: np.ndarray, a: np.ndarray, b: np.ndarray) -> dict:
    """Matrix-minimum rule; crossing out one line per allocation keeps a tree."""
    m, n = cost.shape
    ra = a.copy()
    rb = b.copy()
    row_done = np.zeros(m, dtype=bool)
    col_done = np.zeros(n, dtype=bool)
    rows_left, cols_left = m, n
    flows: dict[tuple[int, int], float] = {}
    for flat in np.argsort(cost, axis=None, kind="stable"):
        i, j = divmod(int(flat), n)
        if row_done[i] or col_done[j]:
            continue
        f = min(ra[i], rb[j])
        flows[(i, j)] = f
        ra[i] -= f
        rb[j] -= f
        if len(flows) == m + n - 1:
            break
        if (ra[i] <= rb[j] and rows_left > 1) or cols_left == 1:
            row_done[i] = True
            rows_left -= 1
        else:
            col_done[j] = True
            cols_left -= 1
    return flows


def _tree_walk(m, n, row_adj, col_adj, cost):
    """Potentials, parent links and depths of the basis tree rooted at row 0."""
    u = np.zeros(m)
    v = np.zeros(n)
    # node ids: rows 0..m-1, columns m..m+n-1
    parent = [-1] * (m + n)
    depth = [0] * (m + n)
    stack = [0]
    seen = [False] * (m + n)
    seen[0] = True
    while stack:
        node = stack.pop()
        if node < m:
            for j in row_adj[node]:
                c = m + j
                if not seen[c]:
                    seen[c] = True
                    v[j] = cost[node, j] - u[node]
                    parent[c] = node
                    depth[c] = depth[node] + 1
                    stack.append(c)
        else:
            j = node - m
            for i in col_adj[j]:
                if not seen[i]:
                    seen[i] = True
                    u[i] = cost[i, j] - v[j]
                    parent[i] = node
                    depth[i] = depth[node] + 1
                    stack.append(i)
    return u, v, parent, depth


def _cell(m, x, y):
    """Cell (row, col) for the tree edge between nodes ``x`` and ``y``."""
    return (x, y - m) if x < m else (y, x - m)


def network_simplex(
    cost: np.ndarray, a: np.ndarray, b: np.ndarray, max_pivots: int | None = None
) -> SimplexSolution:
    """Solve ``min <cost, P>`` over couplings of ``a`` and ``b`` exactly.

    ``a`` and ``b`` must be nonnegative with equal sums; no validation here.
    """
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    if max_pivots is None:
        max_pivots = 50 * (m + n) * max(m, n) + 1000
    scale = max(1.0, float(np.abs(cost).max(initial=0.0)))
    tol = 1e-12 * scale

    flows = _initial_basis(cost, np.asarray(a, float), np.asarray(b, float))
    row_adj = [set() for _ in range(m)]
    col_adj = [set() for _ in range(n)]
    for i, j in flows:
        row_adj[i].add(j)
        col_adj[j].add(i)

    bland = False
    degenerate_run = 0
    pivots = 0
    while True:
        u, v, parent, depth = _tree_walk(m, n, row_adj, col_adj, cost)
        reduced = cost - u[:, None] - v[None, :]
        if bland:
            negative = np.flatnonzero(reduced.ravel() < -tol)
            if negative.size == 0:
                break
            enter = int(negative[0])
        else:
            enter = int(np.argmin(reduced))
            if reduced.flat[enter] >= -tol:
                break
        if pivots >= max_pivots:
            raise RuntimeError("network simplex exceeded its pivot budget")
        ei, ej = divmod(enter, n)

        # cycle: entering cell, then the tree path from column ej back to row ei
        x, y = m + ej, ei
        up_x, up_y = [], []
        while x != y:
            if depth[x] >= depth[y]:
                up_x.append(_cell(m, x, parent[x]))
                x = parent[x]
            else:
                up_y.append(_cell(m, y, parent[y]))
                y = parent[y]
        path = up_x + up_y[::-1]
        minus = path[0::2]
        plus = path[1::2]

        theta = min(flows[c] for c in minus)
        leave = min((c for c in minus if flows[c] == theta), key=lambda c: c[0] * n + c[1])
        for c in minus:
            flows[c] -= theta
        for c in plus:
            flows[c] += theta
        del flows[leave]
        row_adj[leave[0]].discard(leave[1])
        col_adj[leave[1]].discard(leave[0])
        flows[(ei, ej)] = theta
        row_adj[ei].add(ej)
        col_adj[ej].add(ei)

        pivots += 1
        if theta == 0.0:
            degenerate_run += 1
            if degenerate_run > 10 * (m + n):
                bland = True
        else:
            degenerate_run = 0

    flow = np.zeros((m, n))
    for (i, j), f in flows.items():
        flow[i, j] = max(f, 0.0)
    value = float(np.sum(cost * flow))
    return SimplexSolution(flow=flow, u=u, v=v, value=value, n_pivots=pivots)


def _check_weights(w, n, name):
    w = np.asarray(w, dtype=float).ravel()
    if w.shape != (n,):
        raise InvalidArgumentError(f"{name} has length {w.size}, cost has {n} entries on that side")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidArgumentError(f"{name} must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise InvalidArgumentError(f"{name} sums to {w.sum()!r}, expected 1 within 1e-9")
    return w / w.sum()


def emd_exact(cost, mu, nu, method: str = "auto") -> tuple[float, TransportPlan]:
    """Exact optimal transport cost and an optimal coupling.

    Parameters
    ----------
    cost : array-like, shape (n_a, n_b)
        Nonnegative finite ground costs.
    mu, nu : array-like
        Probability vectors of lengths ``n_a`` and ``n_b``.
    method : {"auto", "simplex", "assignment"}
        ``"assignment"`` solves equal-size uniform problems as a min-cost
        perfect matching (an optimal vertex of the Birkhoff polytope);
        ``"auto"`` uses it whenever it applies and the network simplex
        otherwise.

    Returns
    -------
    value : float
    plan : TransportPlan
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.size == 0:
        raise InvalidArgumentError("cost must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(cost)):
        raise InvalidArgumentError("cost has non-finite entries")
    if np.any(cost < 0):
        raise InvalidArgumentError("cost has negative entries")
    m, n = cost.shape
    a = _check_weights(mu, m, "mu")
    b = _check_weights(nu, n, "nu")

    uniform_square = m == n and np.all(a == a[0]) and np.all(b == b[0])
    if method == "assignment" and not uniform_square:
        raise InvalidArgumentError("assignment method needs equal sizes and uniform weights")
    if method not in ("auto", "simplex", "assignment"):
        raise InvalidArgumentError(f"unknown method {method!r}")

    if uniform_square and method != "simplex":
        rows, cols = linear_sum_assignment(cost)
        coupling = np.zeros((m, n))
        coupling[rows, cols] = 1.0 / n
        value = float(cost[rows, cols].sum() / n)
    else:
        sol = network_simplex(cost, a, b)
        coupling, value = sol.flow, sol.value
    return max(value, 0.0), TransportPlan(coupling, a, b)
