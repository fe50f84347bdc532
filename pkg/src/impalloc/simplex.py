"""Dense two-phase primal simplex.

Pricing is Dantzig (most negative reduced cost) until ``2*(n+m)`` consecutive
degenerate pivots occur; the phase then finishes under Bland's rule, which
guarantees termination. Ratio-test ties go to the basic variable with the
lowest index so that pivot sequences are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IterationLimitError
from .model import EQ, GE, LE, LpProblem

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


@dataclass(frozen=True)
class SolverSettings:
    feas_tol: float = 1e-8
    opt_tol: float = 1e-9
    max_iterations: int | None = None
    anti_cycling: str = "dantzig-bland"
    pivot_tol: float = 1e-10

    def __post_init__(self):
        if self.feas_tol <= 0 or self.opt_tol <= 0 or self.pivot_tol <= 0:
            raise ValueError("solver tolerances must be positive")
        if self.anti_cycling not in ("dantzig-bland", "bland"):
            raise ValueError(f"unknown anti-cycling rule {self.anti_cycling!r}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def iteration_limit(self, n: int, m: int) -> int:
        return self.max_iterations if self.max_iterations is not None else 50 * (n + m)


@dataclass
class LpSolution:
    status: str
    values: np.ndarray
    objective: float
    iterations: int = 0
    basis: tuple = ()
    pivots: list = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Standard-form tableau ``[A | slack | artificial | rhs]`` plus a cost row."""

    def __init__(self, problem: LpProblem, settings: SolverSettings):
        self.settings = settings
        A = problem.A.copy()
        b = problem.b.copy()
        senses = list(problem.senses)
        m, n = A.shape
        self.n = n
        self.infeasible_row = None

        keep = []
        for r in range(m):
            scale = np.max(np.abs(A[r]), initial=0.0)
            if scale == 0.0:
                # empty row: 0 (sense) b holds or not, independent of x
                tol = settings.feas_tol * max(1.0, abs(b[r]))
                s = senses[r]
                if (s == LE and b[r] < -tol) or (s == GE and b[r] > tol) or (s == EQ and abs(b[r]) > tol):
                    self.infeasible_row = r
                continue
            A[r] /= scale
            b[r] /= scale
            if b[r] < 0:
                A[r] *= -1.0
                b[r] *= -1.0
                senses[r] = {LE: GE, GE: LE, EQ: EQ}[senses[r]]
            keep.append(r)
        A, b = A[keep], b[keep]
        senses = [senses[r] for r in keep]
        m = len(keep)

        n_slack = sum(s != EQ for s in senses)
        n_art = sum(s != LE for s in senses)
        self.n_slack = n_slack
        self.art_start = n + n_slack
        self.ncols = n + n_slack + n_art
        T = np.zeros((m, self.ncols + 1))
        T[:, :n] = A
        T[:, -1] = b
        basis = []
        si, ai = n, self.art_start
        for r, s in enumerate(senses):
            if s == LE:
                T[r, si] = 1.0
                basis.append(si)
                si += 1
            elif s == GE:
                T[r, si] = -1.0
                si += 1
                T[r, ai] = 1.0
                basis.append(ai)
                ai += 1
            else:
                T[r, ai] = 1.0
                basis.append(ai)
                ai += 1
        self.T = T
        self.basis = basis
        self.iterations = 0
        self.pivots = []

    @property
    def m(self):
        return self.T.shape[0]

    def pivot(self, row: int, col: int):
        T = self.T
        T[row] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])
        self.cost -= self.cost[col] * T[row]
        rhs = T[:, -1]
        rhs[(rhs < 0) & (rhs > -self.settings.feas_tol)] = 0.0
        self.basis[row] = col
        self.pivots.append((row, col))

    def set_cost(self, c_full: np.ndarray):
        """Install reduced costs for column costs ``c_full`` given the current basis."""
        cost = np.zeros(self.T.shape[1])
        cost[: len(c_full)] = c_full
        cb = cost[self.basis]
        self.cost = cost - cb @ self.T

    def run(self, ncols_allowed: int, limit: int, feasible_phase: bool):
        """Iterate to optimality over columns ``[0, ncols_allowed)``."""
        s = self.settings
        bland = s.anti_cycling == "bland"
        degenerate_run = 0
        switch_after = 2 * (self.n + self.m)
        T = self.T
        while True:
            d = self.cost[:ncols_allowed]
            if bland:
                cands = np.flatnonzero(d < -s.opt_tol)
                if cands.size == 0:
                    return OPTIMAL
                col = int(cands[0])
            else:
                col = int(np.argmin(d))
                if d[col] >= -s.opt_tol:
                    return OPTIMAL
            column = T[:, col]
            rows = np.flatnonzero(column > s.pivot_tol)
            if rows.size == 0:
                return UNBOUNDED
            if self.iterations >= limit:
                best = self.primal_values() if feasible_phase else None
                raise IterationLimitError(
                    f"simplex iteration limit {limit} reached", best_point=best, iterations=self.iterations
                )
            ratios = T[rows, -1] / column[rows]
            rmin = ratios.min()
            tied = rows[ratios <= rmin + 1e-12 * max(1.0, abs(rmin))]
            row = int(min(tied, key=lambda r: self.basis[r]))
            self.pivot(row, col)
            self.iterations += 1
            if rmin <= s.feas_tol:
                degenerate_run += 1
                if not bland and degenerate_run >= switch_after:
                    bland = True
            else:
                degenerate_run = 0

    def primal_values(self) -> np.ndarray:
        x = np.zeros(self.n)
        for r, j in enumerate(self.basis):
            if j < self.n:
                x[j] = self.T[r, -1]
        return x

    def drive_out_artificials(self):
        """Pivot zero-level artificials out of the basis; drop redundant rows."""
        tol = self.settings.pivot_tol
        r = 0
        while r < self.m:
            if self.basis[r] >= self.art_start:
                row = self.T[r, : self.art_start]
                cand = np.flatnonzero(np.abs(row) > max(tol, 1e-9))
                if cand.size:
                    col = int(cand[np.argmax(np.abs(row[cand]))])
                    self.pivot(r, col)
                else:
                    self.T = np.delete(self.T, r, axis=0)
                    del self.basis[r]
                    continue
            r += 1


def _phase_one(problem: LpProblem, settings: SolverSettings):
    tab = _Tableau(problem, settings)
    limit = settings.iteration_limit(problem.n, problem.m)
    if tab.infeasible_row is not None:
        return tab, False, limit
    c1 = np.zeros(tab.ncols)
    c1[tab.art_start:] = 1.0
    tab.set_cost(c1)
    tab.run(tab.ncols, limit, feasible_phase=False)
    infeasibility = -tab.cost[-1]
    feasible = infeasibility <= settings.feas_tol
    return tab, feasible, limit


def _infeasible(problem: LpProblem, tab: _Tableau) -> LpSolution:
    return LpSolution(INFEASIBLE, np.full(problem.n, np.nan), np.nan, tab.iterations, (), tab.pivots)


def find_feasible_point(problem: LpProblem, settings: SolverSettings | None = None) -> LpSolution:
    """Phase 1 only: a feasible point (status ``optimal``) or ``infeasible``."""
    settings = settings or SolverSettings()
    tab, feasible, _ = _phase_one(problem, settings)
    if not feasible:
        return _infeasible(problem, tab)
    x = np.maximum(tab.primal_values(), 0.0)
    return LpSolution(OPTIMAL, x, problem.objective(x), tab.iterations, tuple(sorted(tab.basis)), tab.pivots)


def solve_simplex(problem: LpProblem, settings: SolverSettings | None = None) -> LpSolution:
    """Solve ``problem`` with the two-phase method.

    Raises :class:`IterationLimitError` when the iteration budget is exhausted;
    infeasible and unbounded problems are reported through ``status``.
    """
    settings = settings or SolverSettings()
    tab, feasible, limit = _phase_one(problem, settings)
    if not feasible:
        return _infeasible(problem, tab)

    tab.drive_out_artificials()
    tab.T = np.delete(tab.T, np.s_[tab.art_start:tab.ncols], axis=1)
    tab.ncols = tab.art_start
    c = -problem.c if problem.maximize else problem.c
    c_full = np.zeros(tab.ncols)
    c_full[: problem.n] = c
    tab.set_cost(c_full)
    status = tab.run(tab.ncols, limit, feasible_phase=True)
    if status == UNBOUNDED:
        x = tab.primal_values()
        inf = np.inf if problem.maximize else -np.inf
        return LpSolution(UNBOUNDED, x, inf, tab.iterations, tuple(sorted(tab.basis)), tab.pivots)
    x = tab.primal_values()
    x[(x < 0) & (x > -settings.feas_tol)] = 0.0
    return LpSolution(OPTIMAL, x, problem.objective(x), tab.iterations, tuple(sorted(tab.basis)), tab.pivots)
