"""Problem instances and their translation into linear programs.

The revenue model has one variable per admissible quad. Rows, in order:

* supply, one per ``(location, frame)``: ``sum x <= S``
* demand, one per finite-budget campaign: ``sum p*x <= D``
* lasting (optional), one per ``(campaign, frame)``: ``sum x >= mu``
* no-overflow (optional), one per quad at nodes with two or more pairs: ``x <= P*S``
* learning (optional), one per "new" quad: ``x >= lambda``

Non-negativity is implicit in every :class:`LpProblem`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import InfeasibleError, ModelError
from .grid import AdmissibleSet, Configuration, Quad

LE, GE, EQ = "<=", ">=", "="


@dataclass(frozen=True)
class Instance:
    """One allocation problem.

    ``supply`` is keyed by ``(location, frame)``, ``mu`` by ``(campaign, frame)``,
    ``overflow_frac`` by ``(location, frame)``; ``profit`` and ``lam`` by quad.
    ``demand`` values may be ``math.inf`` (unbounded budget). ``value``
    optionally overrides the objective coefficients (e.g. risk-discounted
    profits); budgets are always charged at ``profit``.
    """

    admissible: AdmissibleSet
    supply: Mapping[tuple[str, int], float]
    demand: Mapping[str, float]
    profit: Mapping[Quad, float]
    mu: Mapping[tuple[str, int], float] = field(default_factory=dict)
    overflow_frac: Mapping[tuple[str, int], float] = field(default_factory=dict)
    lam: Mapping[Quad, float] = field(default_factory=dict)
    lasting: bool = False
    overflow: bool = False
    learning: bool = False
    value: Mapping[Quad, float] | None = None

    def objective_coef(self, quad: Quad) -> float:
        if self.value is not None:
            return self.value[quad]
        return self.profit[quad]

    def budget(self, campaign: str) -> float:
        return self.demand.get(campaign, math.inf)

    def profit_cap(self) -> float:
        """Largest admissible profit per impression (0 for an empty set)."""
        return max((self.profit[q] for q in self.admissible), default=0.0)

    def with_flags(self, **flags) -> "Instance":
        return replace(self, **flags)

    def validate(self) -> None:
        for q in self.admissible:
            p = self.profit.get(q)
            if p is None:
                raise ModelError(f"no profit for quad {tuple(q)}")
            if not (p >= 0 and math.isfinite(p)):
                raise ModelError(f"profit {p} at {tuple(q)} must be finite and >= 0")
            if self.value is not None and q not in self.value:
                raise ModelError(f"no objective value for quad {tuple(q)}")
        for l, k in self.admissible.nodes():
            s = self.supply.get((l, k))
            if s is None:
                raise ModelError(f"no supply for location {l!r} frame {k}")
            if not (s >= 0 and math.isfinite(s)):
                raise ModelError(f"supply {s} at ({l!r}, {k}) must be finite and >= 0")
        for i in self.admissible.campaigns():
            d = self.budget(i)
            if not d >= 0:
                raise ModelError(f"budget {d} of campaign {i!r} must be >= 0")
        for key, p in self.overflow_frac.items():
            if not 0.0 <= p <= 1.0:
                raise ModelError(f"overflow fraction {p} at {key} outside [0, 1]")
        for name, mapping in (("mu", self.mu), ("lambda", self.lam)):
            for key, v in mapping.items():
                if not (v >= 0 and math.isfinite(v)):
                    raise ModelError(f"{name} {v} at {key} must be finite and >= 0")


@dataclass(frozen=True)
class LpProblem:
    """Dense linear program ``opt c.x  s.t.  A x (senses) b,  x >= 0``."""

    A: np.ndarray
    senses: tuple[str, ...]
    b: np.ndarray
    c: np.ndarray
    maximize: bool
    variables: tuple = ()
    row_labels: tuple = ()

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2:
            A = A.reshape(len(self.senses), len(self.c))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(-1))
        m, n = A.shape
        if len(self.senses) != m or self.b.shape != (m,) or self.c.shape != (n,):
            raise ModelError(f"inconsistent LP dimensions A={A.shape} b={self.b.shape} c={self.c.shape}")
        if any(s not in (LE, GE, EQ) for s in self.senses):
            raise ModelError(f"unknown constraint sense in {set(self.senses)}")
        if not np.all(np.isfinite(self.b)):
            raise ModelError("right-hand sides must be finite")
        if not self.variables:
            object.__setattr__(self, "variables", tuple(range(n)))
        if not self.row_labels:
            object.__setattr__(self, "row_labels", tuple(range(m)))

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float))

    def violations(self, x, tol: float = 1e-8) -> list[str]:
        """Rows (and bounds) violated by ``x`` beyond ``tol`` scaled by row magnitude."""
        x = np.asarray(x, dtype=float)
        out = [f"x[{j}]={x[j]:.3g} < 0" for j in np.flatnonzero(x < -tol)]
        lhs = self.A @ x
        for r in range(self.m):
            scale = max(1.0, abs(self.b[r]), float(np.max(np.abs(self.A[r]) * np.abs(x), initial=0.0)))
            gap = lhs[r] - self.b[r]
            s = self.senses[r]
            if (s == LE and gap > tol * scale) or (s == GE and gap < -tol * scale) or (
                s == EQ and abs(gap) > tol * scale
            ):
                out.append(f"row {self.row_labels[r]}: {lhs[r]:.6g} {s} {self.b[r]:.6g}")
        return out

    def with_row(self, coeffs, sense: str, rhs: float, label=None) -> "LpProblem":
        return replace(
            self,
            A=np.vstack([self.A, np.asarray(coeffs, dtype=float)[None, :]]),
            senses=self.senses + (sense,),
            b=np.append(self.b, rhs),
            row_labels=self.row_labels + (label if label is not None else self.m,),
        )


class _RowBuilder:
    def __init__(self, n):
        self.n = n
        self.rows, self.senses, self.rhs, self.labels = [], [], [], []

    def add(self, coeffs: Mapping[int, float], sense, rhs, label):
        row = np.zeros(self.n)
        for j, a in coeffs.items():
            row[j] += a
        self.rows.append(row)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.labels.append(label)

    def problem(self, c, maximize, variables) -> LpProblem:
        A = np.array(self.rows, dtype=float).reshape(len(self.rows), self.n)
        return LpProblem(A, tuple(self.senses), np.array(self.rhs), np.asarray(c, dtype=float),
                         maximize, tuple(variables), tuple(self.labels))


def overflow_nodes(admissible: AdmissibleSet) -> list[tuple[str, int]]:
    """``(location, frame)`` keys where two or more distinct pairs are admissible."""
    return [
        (l, k) for l, k in admissible.nodes()
        if len({q.pair for q in admissible.at_node(l, k)}) >= 2
    ]


def build_revenue_lp(instance: Instance) -> LpProblem:
    instance.validate()
    adm = instance.admissible
    quads = adm.ordered()
    index = {q: j for j, q in enumerate(quads)}
    rb = _RowBuilder(len(quads))

    for l, k in adm.nodes():
        rb.add({index[q]: 1.0 for q in adm.at_node(l, k)}, LE, instance.supply[(l, k)], ("supply", l, k))
    for i in adm.campaigns():
        d = instance.budget(i)
        if math.isinf(d):
            continue
        rb.add({index[q]: instance.profit[q] for q in adm.by_campaign(i)}, LE, d, ("demand", i))
    if instance.lasting:
        for i in adm.campaigns():
            for k in sorted({q.frame for q in adm.by_campaign(i)}):
                rb.add({index[q]: 1.0 for q in adm.by_campaign_frame(i, k)}, GE,
                       instance.mu.get((i, k), 0.0), ("lasting", i, k))
    if instance.overflow:
        for l, k in overflow_nodes(adm):
            cap = instance.overflow_frac.get((l, k), 1.0) * instance.supply[(l, k)]
            for q in adm.at_node(l, k):
                rb.add({index[q]: 1.0}, LE, cap, ("overflow", q))
    if instance.learning:
        for q in sorted(instance.lam):
            if q not in index:
                raise ModelError(f"learning bound on inadmissible quad {tuple(q)}")
            rb.add({index[q]: 1.0}, GE, instance.lam[q], ("learning", q))

    c = [instance.objective_coef(q) for q in quads]
    return rb.problem(c, True, quads)


def build_min_impressions_lp(instance: Instance, targets: Mapping[str, float]) -> LpProblem:
    """Fewest impressions meeting each campaign's revenue target exactly.

    Only the supply rows of the instance are kept; secondary families are ignored.
    """
    instance.validate()
    adm = instance.admissible
    known = set(adm.campaigns())
    for i, d in targets.items():
        if i not in known:
            raise ModelError(f"target for unknown campaign {i!r}")
        if not (d >= 0 and math.isfinite(d)):
            raise ModelError(f"target {d} for campaign {i!r} must be finite and >= 0")
    quads = adm.ordered()
    index = {q: j for j, q in enumerate(quads)}
    rb = _RowBuilder(len(quads))
    for l, k in adm.nodes():
        rb.add({index[q]: 1.0 for q in adm.at_node(l, k)}, LE, instance.supply[(l, k)], ("supply", l, k))
    for i in sorted(targets):
        rb.add({index[q]: instance.profit[q] for q in adm.by_campaign(i)}, EQ, targets[i], ("target", i))
    return rb.problem(np.ones(len(quads)), False, quads)


def lex_tolerance(best: float) -> float:
    return 1e-7 * max(1.0, abs(best))


@dataclass(frozen=True)
class Lexicographic:
    stage1: LpProblem
    stage2: LpProblem
    best_revenue: float
    stage1_solution: object


def build_lexicographic(instance: Instance, settings=None) -> Lexicographic:
    """Revenue first, then fewest impressions among (near-)revenue-optimal points.

    Stage 1 is solved here to obtain the revenue floor for stage 2.
    """
    from .simplex import solve_simplex

    stage1 = build_revenue_lp(instance)
    sol = solve_simplex(stage1, settings)
    if sol.status != "optimal":
        raise InfeasibleError(f"stage 1 is {sol.status}")
    best = sol.objective
    floored = stage1.with_row(stage1.c, GE, best - lex_tolerance(best), ("revenue-floor",))
    stage2 = replace(floored, c=np.ones(stage1.n), maximize=False)
    return Lexicographic(stage1, stage2, best, sol)


def to_configuration(problem: LpProblem, values, admissible: AdmissibleSet) -> Configuration:
    """Map solver values back to quads; tiny negatives from round-off become 0."""
    return Configuration(admissible, {q: max(0.0, float(x)) for q, x in zip(problem.variables, values)})


def check_configuration(instance: Instance, x: Mapping[Quad, float], tol: float = 1e-7) -> list[str]:
    """Check a configuration directly against the instance's constraint families.

    Deliberately independent of :class:`LpProblem`: it walks the instance maps.
    Tolerances are relative to ``max(1, |rhs|)``.
    """
    out = []
    adm = instance.admissible

    def val(q):
        return float(x.get(q, 0.0))

    for q, v in x.items():
        if v and q not in adm:
            out.append(f"inadmissible {tuple(q)} has value {v}")
        if v < -tol:
            out.append(f"negative value {v} at {tuple(q)}")

    node_sum, camp_spend, camp_frame = {}, {}, {}
    for q in adm:
        v = val(q)
        node_sum[q.node] = node_sum.get(q.node, 0.0) + v
        camp_spend[q.campaign] = camp_spend.get(q.campaign, 0.0) + instance.profit[q] * v
        camp_frame[(q.campaign, q.frame)] = camp_frame.get((q.campaign, q.frame), 0.0) + v

    for node, total in node_sum.items():
        s = instance.supply[node]
        if total > s + tol * max(1.0, s):
            out.append(f"supply exceeded at {node}: {total} > {s}")
    for i, spend in camp_spend.items():
        d = instance.budget(i)
        if spend > d + tol * max(1.0, d):
            out.append(f"budget exceeded for {i!r}: {spend} > {d}")
    if instance.lasting:
        for key, total in camp_frame.items():
            mu = instance.mu.get(key, 0.0)
            if total < mu - tol * max(1.0, mu):
                out.append(f"lasting violated at {key}: {total} < {mu}")
    if instance.overflow:
        pairs_at = {}
        for q in adm:
            pairs_at.setdefault(q.node, set()).add(q.pair)
        for q in adm:
            if len(pairs_at[q.node]) < 2:
                continue
            cap = instance.overflow_frac.get(q.node, 1.0) * instance.supply[q.node]
            if val(q) > cap + tol * max(1.0, cap):
                out.append(f"overflow at {tuple(q)}: {val(q)} > {cap}")
    if instance.learning:
        for q, lam in instance.lam.items():
            if val(q) < lam - tol * max(1.0, lam):
                out.append(f"learning violated at {tuple(q)}: {val(q)} < {lam}")
    return out


def revenue(instance: Instance, x: Mapping[Quad, float]) -> float:
    return math.fsum(instance.profit[q] * v for q, v in x.items())


@dataclass(frozen=True)
class TransportationInstance:
    """Classical transportation problem.

    ``values[s][d]`` is the unit cost (or profit when ``maximize``) of moving
    one unit from supply ``s`` to demand ``d``.
    """

    supplies: tuple[float, ...]
    demands: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]
    maximize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "supplies", tuple(float(s) for s in self.supplies))
        object.__setattr__(self, "demands", tuple(float(d) for d in self.demands))
        object.__setattr__(self, "values", tuple(tuple(float(c) for c in row) for row in self.values))
        if len(self.values) != len(self.supplies) or any(len(r) != len(self.demands) for r in self.values):
            raise ModelError("value matrix must be len(supplies) x len(demands)")
        if any(not (v >= 0 and math.isfinite(v)) for v in self.supplies + self.demands):
            raise ModelError("supplies and demands must be finite and >= 0")

    @property
    def balanced(self) -> bool:
        s, d = math.fsum(self.supplies), math.fsum(self.demands)
        return abs(s - d) <= 1e-9 * max(1.0, s, d)

    def to_lp(self) -> LpProblem:
        """Equality-constrained LP over the flattened ``supply x demand`` flows."""
        m, n = len(self.supplies), len(self.demands)
        rb = _RowBuilder(m * n)
        for s in range(m):
            rb.add({s * n + d: 1.0 for d in range(n)}, EQ, self.supplies[s], ("supply", s))
        for d in range(n):
            rb.add({s * n + d: 1.0 for s in range(m)}, EQ, self.demands[d], ("demand", d))
        c = [v for row in self.values for v in row]
        return rb.problem(c, self.maximize, [(s, d) for s in range(m) for d in range(n)])


def balance(t: TransportationInstance) -> TransportationInstance:
    """Append a zero-valued dummy supply or demand so totals agree."""
    if t.balanced:
        return t
    total_s, total_d = math.fsum(t.supplies), math.fsum(t.demands)
    if total_s > total_d:
        return TransportationInstance(
            t.supplies, t.demands + (total_s - total_d,),
            tuple(row + (0.0,) for row in t.values), t.maximize,
        )
    return TransportationInstance(
        t.supplies + (total_d - total_s,), t.demands,
        t.values + ((0.0,) * len(t.demands),), t.maximize,
    )
