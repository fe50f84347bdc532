"""Balanced transportation problems: northwest corner + stepping stone (MODI).

Degeneracy is removed by perturbing every supply by ``eps`` and the last
demand by ``m*eps``. The perturbation is carried symbolically: each flow is a
pair ``(value, eps_count)`` compared lexicographically, so the reported flows
are the unperturbed ones with no rounding introduced by a numeric ``eps``.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .errors import DomainError, IterationLimitError
from .model import TransportationInstance
from .simplex import OPTIMAL, LpSolution, SolverSettings


class _Flow:
    __slots__ = ("a", "e")

    def __init__(self, a=0.0, e=0):
        self.a = a
        self.e = e


def _less(x: _Flow, y: _Flow, tol: float) -> bool:
    if x.a < y.a - tol:
        return True
    if x.a > y.a + tol:
        return False
    return x.e < y.e


def _is_zero(x: _Flow, tol: float) -> bool:
    return abs(x.a) <= tol and x.e == 0


def northwest_corner(supplies, demands, tol):
    m, n = len(supplies), len(demands)
    rem_s = [_Flow(s, 1) for s in supplies]
    rem_d = [_Flow(d, 0) for d in demands]
    rem_d[-1].e = m
    flows = {}
    i = j = 0
    while i < m and j < n:
        q = rem_s[i] if _less(rem_s[i], rem_d[j], tol) else rem_d[j]
        q = _Flow(q.a, q.e)
        flows[(i, j)] = q
        rem_s[i] = _Flow(rem_s[i].a - q.a, rem_s[i].e - q.e)
        rem_d[j] = _Flow(rem_d[j].a - q.a, rem_d[j].e - q.e)
        if _is_zero(rem_s[i], tol) and i < m - 1:
            i += 1
        else:
            j += 1
    return flows


def _potentials(basis, cost, m, n):
    rows_adj = [[] for _ in range(m)]
    cols_adj = [[] for _ in range(n)]
    for i, j in basis:
        rows_adj[i].append(j)
        cols_adj[j].append(i)
    u = [None] * m
    v = [None] * n
    u[0] = 0.0
    queue = deque([("r", 0)])
    while queue:
        kind, idx = queue.popleft()
        if kind == "r":
            for j in rows_adj[idx]:
                if v[j] is None:
                    v[j] = cost[idx][j] - u[idx]
                    queue.append(("c", j))
        else:
            for i in cols_adj[idx]:
                if u[i] is None:
                    u[i] = cost[i][idx] - v[idx]
                    queue.append(("r", i))
    return u, v, rows_adj, cols_adj


def _tree_path(rows_adj, cols_adj, start_row, end_col):
    """Edges (cells) of the basis-tree path from row ``start_row`` to column ``end_col``."""
    parent = {("r", start_row): None}
    queue = deque([("r", start_row)])
    target = ("c", end_col)
    while queue:
        node = queue.popleft()
        if node == target:
            break
        kind, idx = node
        nbrs = [("c", j) for j in rows_adj[idx]] if kind == "r" else [("r", i) for i in cols_adj[idx]]
        for nb in nbrs:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    edges = []
    node = target
    while parent[node] is not None:
        prev = parent[node]
        if node[0] == "c":
            edges.append((prev[1], node[1]))
        else:
            edges.append((node[1], prev[1]))
        node = prev
    edges.reverse()
    return edges


def solve_transportation(t: TransportationInstance, settings: SolverSettings | None = None) -> LpSolution:
    """Optimal flows of a balanced instance; ``values`` is the row-major flow matrix."""
    settings = settings or SolverSettings()
    if not t.balanced:
        raise DomainError("transportation instance is unbalanced; call balance() first")
    m, n = len(t.supplies), len(t.demands)
    if m == 0 or n == 0:
        return LpSolution(OPTIMAL, np.zeros(m * n), 0.0, 0, ())
    sign = -1.0 if t.maximize else 1.0
    cost = [[sign * c for c in row] for row in t.values]
    scale = max([1.0] + [abs(x) for x in t.supplies + t.demands])
    tol = 1e-12 * scale
    opt_tol = settings.opt_tol * max([1.0] + [abs(c) for row in cost for c in row])

    flows = northwest_corner(t.supplies, t.demands, tol)
    limit = settings.iteration_limit(m * n, m + n)
    iterations = 0
    while True:
        u, v, rows_adj, cols_adj = _potentials(flows, cost, m, n)
        best, enter = -opt_tol, None
        for i in range(m):
            for j in range(n):
                if (i, j) in flows:
                    continue
                r = cost[i][j] - u[i] - v[j]
                if r < best:
                    best, enter = r, (i, j)
        if enter is None:
            break
        if iterations >= limit:
            raise IterationLimitError(
                f"stepping stone iteration limit {limit} reached",
                best_point=_flat(flows, m, n), iterations=iterations,
            )
        path = _tree_path(rows_adj, cols_adj, enter[0], enter[1])
        # cycle: enter(+), then alternate signs walking back from the column end
        minus = path[::-1][0::2]
        plus = path[::-1][1::2]
        leave = minus[0]
        for cell in minus[1:]:
            if _less(flows[cell], flows[leave], tol) or (
                not _less(flows[leave], flows[cell], tol) and cell < leave
            ):
                leave = cell
        theta = flows[leave]
        theta = _Flow(theta.a, theta.e)
        for cell in plus:
            f = flows[cell]
            flows[cell] = _Flow(f.a + theta.a, f.e + theta.e)
        for cell in minus:
            f = flows[cell]
            flows[cell] = _Flow(f.a - theta.a, f.e - theta.e)
        del flows[leave]
        flows[enter] = theta
        iterations += 1

    x = _flat(flows, m, n)
    objective = float(sum(t.values[i][j] * x[i * n + j] for i in range(m) for j in range(n)))
    basis = tuple(sorted(i * n + j for i, j in flows))
    return LpSolution(OPTIMAL, x, objective, iterations, basis)


def _flat(flows, m, n):
    x = np.zeros(m * n)
    for (i, j), f in flows.items():
        x[i * n + j] = max(f.a, 0.0)
    return x
