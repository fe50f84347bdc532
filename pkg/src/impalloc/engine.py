"""Rolling-horizon delivery: project, optimise, emit next-frame probabilities, repeat."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping

from .errors import ContractViolation, DomainError, InfeasibleError
from .feasibility import clamp_secondary
from .grid import AdmissibleSet, Catalog, Configuration, Quad
from .history import HistoryLog, HistoryRecord
from .model import Instance, build_revenue_lp, to_configuration
from .projection import FeatureSpec, HistoryProjector, ProjectionParams, fit_supply_regressor
from .simplex import SolverSettings, solve_simplex

log = logging.getLogger(__name__)

PLAN_SUM_TOL = 1e-9


@dataclass
class DeliveryPlan:
    """Per ``(location, frame)``: probability of serving each ``(campaign, creative)``."""

    probabilities: dict[tuple[str, int], dict[tuple[str, str], float]] = field(default_factory=dict)

    def nodes(self) -> list[tuple[str, int]]:
        return sorted(self.probabilities, key=lambda n: (n[1], n[0]))

    def at(self, location: str, frame: int) -> dict[tuple[str, str], float]:
        return self.probabilities.get((location, frame), {})

    def residual(self, location: str, frame: int) -> float:
        return 1.0 - sum(self.at(location, frame).values())

    def rows(self):
        """``(frame, location, campaign, creative, probability)`` in canonical order."""
        out = []
        for (l, k), probs in self.probabilities.items():
            for (i, j), p in probs.items():
                out.append((k, l, i, j, p))
        out.sort(key=lambda r: r[:4])
        return out

    def violations(self) -> list[str]:
        bad = []
        for node, probs in self.probabilities.items():
            for pair, p in probs.items():
                if not 0.0 <= p <= 1.0:
                    bad.append(f"probability {p} of {pair} at {node} outside [0, 1]")
            total = sum(probs.values())
            if total > 1.0 + PLAN_SUM_TOL:
                bad.append(f"probabilities at {node} sum to {total}")
        return bad


def apply_horizon(instance: Instance, horizon: int) -> Instance:
    """Keep the first ``horizon`` frames, merge every later frame into one.

    The merged frame takes the index ``first + horizon``. Its supply per
    location and its mu (and lambda) per key are sums over the merged frames;
    profits, objective values and overflow fractions are supply-weighted means.
    """
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    frames = sorted({k for _, k in instance.supply} | set(instance.admissible.frames()))
    if len(frames) <= horizon:
        return instance
    first = frames[0]
    agg = first + horizon

    def fold(k):
        return k if k < agg else agg

    supply_parts: dict = {}
    for (l, k), s in instance.supply.items():
        supply_parts.setdefault((l, fold(k)), []).append(s)
    supply = {key: math.fsum(v) for key, v in supply_parts.items()}

    mu_parts: dict = {}
    for (i, k), v in instance.mu.items():
        mu_parts.setdefault((i, fold(k)), []).append(v)
    mu = {key: math.fsum(v) for key, v in mu_parts.items()}

    groups: dict[Quad, list[Quad]] = {}
    for q in instance.admissible:
        key = q if q.frame < agg else Quad(q.campaign, q.creative, agg, q.location)
        groups.setdefault(key, []).append(q)

    def weighted(values: Mapping[Quad, float], members):
        weights = [instance.supply.get(q.node, 0.0) for q in members]
        total = math.fsum(weights)
        if total <= 0.0:
            return math.fsum(values[q] for q in members) / len(members)
        return math.fsum(w * values[q] for w, q in zip(weights, members)) / total

    profit, value, lam = {}, ({} if instance.value is not None else None), {}
    for key, members in groups.items():
        profit[key] = weighted(instance.profit, members) if len(members) > 1 else instance.profit[members[0]]
        if value is not None:
            value[key] = weighted(instance.value, members) if len(members) > 1 else instance.value[members[0]]
        lam_members = [instance.lam[q] for q in members if q in instance.lam]
        if lam_members:
            lam[key] = math.fsum(lam_members)

    overflow_frac = {}
    if instance.overflow_frac:
        parts: dict = {}
        for (l, k), p in instance.overflow_frac.items():
            parts.setdefault((l, fold(k)), []).append((instance.supply.get((l, k), 0.0), p))
        for key, items in parts.items():
            total = math.fsum(w for w, _ in items)
            overflow_frac[key] = (
                math.fsum(w * p for w, p in items) / total if total > 0 else min(p for _, p in items)
            )

    return replace(
        instance,
        admissible=AdmissibleSet(groups),
        supply=supply,
        profit=profit,
        value=value,
        mu=mu,
        lam=lam,
        overflow_frac=overflow_frac,
    )


def to_probabilities(config: Configuration, supply: Mapping[tuple[str, int], float],
                     frames: Iterable[int] | None = None, tol: float = 1e-6) -> DeliveryPlan:
    """Turn impression counts into per-node delivery probabilities ``x / S``."""
    wanted = None if frames is None else set(frames)
    plan = DeliveryPlan()
    for l, k in config.admissible.nodes():
        if wanted is not None and k not in wanted:
            continue
        quads = config.admissible.at_node(l, k)
        s = supply.get((l, k), 0.0)
        xs = [config[q] for q in quads]
        total = math.fsum(xs)
        if total > s + tol * max(1.0, s):
            raise ContractViolation(f"configuration exceeds supply at ({l!r}, {k}): {total} > {s}")
        if s <= 0.0:
            probs = {q.pair: 0.0 for q in quads}
        else:
            probs = {q.pair: min(1.0, max(0.0, x / s)) for q, x in zip(quads, xs)}
            psum = math.fsum(probs.values())
            if psum > 1.0:
                probs = {pair: p / psum for pair, p in probs.items()}
        plan.probabilities[(l, k)] = probs
    return plan


@dataclass(frozen=True)
class EngineConfig:
    horizon: int = 24
    gamma: float = 0.95
    projection: ProjectionParams = ProjectionParams()
    solver: SolverSettings = SolverSettings()
    lasting_min: float = 0.0
    overflow_frac: float | None = None
    learning_min: float = 0.0
    supply_method: str = "weighted"
    feature_spec: FeatureSpec = FeatureSpec()

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.overflow_frac is not None and not 0.0 <= self.overflow_frac <= 1.0:
            raise ValueError("overflow fraction must lie in [0, 1]")
        if self.lasting_min < 0 or self.learning_min < 0:
            raise ValueError("lasting and learning minima must be >= 0")
        if self.supply_method not in ("weighted", "regressor"):
            raise ValueError(f"unknown supply method {self.supply_method!r}")


@dataclass
class EngineState:
    """Mutable loop state; owned by one engine."""

    catalog: Catalog
    budgets: dict[str, float]
    history: HistoryLog = field(default_factory=HistoryLog)
    config: EngineConfig = EngineConfig()
    frame: int = 1
    remaining: dict[str, float] = None
    new_triples: set = field(default_factory=set)
    projector_factory: Callable | None = None
    _learned: Counter = field(default_factory=Counter)
    _projector: HistoryProjector | None = None

    def __post_init__(self):
        if self.remaining is None:
            self.remaining = dict(self.budgets)
        self.new_triples = set(self.new_triples)

    def projector(self):
        """Projector over the current history; kept across cycles and refreshed by :func:`advance`."""
        if self.projector_factory is not None:
            return self.projector_factory(self)
        if self._projector is None:
            self._projector = HistoryProjector(self.history, self.config.projection)
        if self.config.supply_method == "regressor" and self._projector.supply_model is None:
            self._projector.set_supply_model(fit_supply_regressor(self.history, self.config.feature_spec))
        return self._projector


@dataclass
class CycleDiagnostics:
    frame: int
    objective: float = 0.0
    planned_revenue: float = 0.0
    iterations: int = 0
    n_variables: int = 0
    n_rows: int = 0
    levels: dict = field(default_factory=dict)


def build_cycle_instance(state: EngineState, schedule: AdmissibleSet, projector=None) -> Instance:
    """The (un-aggregated) instance for every schedule frame from ``state.frame`` on."""
    cfg = state.config
    window = schedule.filter(lambda q: q.frame >= state.frame)
    if not len(window):
        raise DomainError(f"no admissible quad at or after frame {state.frame}")
    projector = projector or state.projector()
    cat = state.catalog
    profit, value = {}, {}
    for q in window:
        est = projector.profit(q.campaign, q.creative, q.location, cat.frame_start(q.frame))
        profit[q] = est.value
        value[q] = est.value * cfg.gamma ** (q.frame - state.frame)
    supply = {(l, k): projector.supply(l, cat.frame_start(k)) for l, k in window.nodes()}
    demand = {i: state.remaining.get(i, math.inf) for i in window.campaigns()}
    mu = {}
    if cfg.lasting_min > 0:
        mu = {(i, k): cfg.lasting_min for i in window.campaigns() for k in {q.frame for q in window.by_campaign(i)}}
    lam = {}
    if cfg.learning_min > 0:
        lam = {q: cfg.learning_min for q in window if q.triple in state.new_triples}
    overflow = {}
    if cfg.overflow_frac is not None:
        overflow = {node: cfg.overflow_frac for node in supply}
    return Instance(
        window, supply, demand, profit, mu, overflow, lam,
        lasting=bool(mu), overflow=cfg.overflow_frac is not None, learning=bool(lam), value=value,
    )


def plan_cycle(state: EngineState, schedule: AdmissibleSet) -> tuple[DeliveryPlan, CycleDiagnostics]:
    """One optimisation cycle; only the plan for ``state.frame`` is returned."""
    projector = state.projector()
    if hasattr(projector, "levels"):
        projector.levels = {}
    instance = build_cycle_instance(state, schedule, projector)
    reduced = clamp_secondary(apply_horizon(instance, state.config.horizon))
    problem = build_revenue_lp(reduced)
    sol = solve_simplex(problem, state.config.solver)
    if sol.status != "optimal":
        if reduced.overflow:
            raise InfeasibleError(f"frame {state.frame}: model is {sol.status} with overflow constraints")
        raise ContractViolation(f"frame {state.frame}: clamped model is {sol.status}")
    config = to_configuration(problem, sol.values, reduced.admissible)
    plan = to_probabilities(config, reduced.supply, frames=[state.frame])
    diag = CycleDiagnostics(
        frame=state.frame,
        objective=sol.objective,
        planned_revenue=math.fsum(reduced.profit[q] * x for q, x in config.items()),
        iterations=sol.iterations,
        n_variables=problem.n,
        n_rows=problem.m,
        levels=dict(getattr(projector, "levels", {})),
    )
    log.debug("frame %d: objective %.6g in %d pivots (%d x %d)", state.frame, sol.objective,
              sol.iterations, problem.m, problem.n)
    return plan, diag


def advance(state: EngineState, frame: int, records: Iterable[HistoryRecord] = (),
            spend: Mapping[str, float] | None = None) -> EngineState:
    """Fold one frame's outcome into ``state`` and move to the next frame.

    ``records`` go to the history (possibly a thinned view of real traffic);
    ``spend`` is the billed profit per campaign, defaulting to the records' sum.
    """
    if frame != state.frame:
        raise DomainError(f"outcome for frame {frame} but the engine is at frame {state.frame}")
    records = list(records)
    state.history.extend(records)
    if state._projector is not None:
        state._projector.invalidate(records)
        if state.config.supply_method == "regressor":
            state._projector.set_supply_model(None)
    if spend is None:
        spend = Counter()
        for r in records:
            if r.filled:
                spend[r.campaign] += r.profit
    for i, s in spend.items():
        if i in state.remaining and not math.isinf(state.remaining[i]):
            state.remaining[i] = max(0.0, state.remaining[i] - s)
    n_min = state.config.projection.n_min
    for r in records:
        if r.filled:
            triple = (r.campaign, r.creative, r.location)
            state._learned[triple] += r.impressions
            if state._learned[triple] >= n_min:
                state.new_triples.discard(triple)
    state.frame += 1
    return state
