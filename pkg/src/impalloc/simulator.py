"""Synthetic ad-serving world and policy evaluation.

Traffic at a location is ``base * day_mult[weekday] * hour_mult[hour] *
(1 + trend * days) * exp(sigma * z)``; impression arrivals per frame are a
Poisson draw around it (or its rounding, for deterministic worlds). Every
slot is served one creative sampled from the policy's plan or left empty.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from datetime import timedelta
from typing import Callable, Mapping, Sequence

import numpy as np

from .engine import DeliveryPlan, EngineConfig, EngineState, advance, plan_cycle
from .errors import ContractViolation, ImpallocError
from .grid import AdmissibleSet, Catalog, Quad
from .history import UNFILLED, HistoryLog, HistoryRecord
from .projection import ProfitEstimate

POLICIES = ("lp-engine", "greedy", "uniform")


@dataclass(frozen=True)
class WorldConfig:
    catalog: Catalog
    schedule: AdmissibleSet
    budgets: Mapping[str, float]
    profits: Mapping[tuple[str, str, str], float]
    base_supply: Mapping[str, float]
    hour_multipliers: Sequence[float] = (1.0,) * 24
    dow_multipliers: Sequence[float] = (1.0,) * 7
    noise_sigma: float = 0.0
    supply_trend: float = 0.0
    profit_drift: float = 0.0
    observability: float = 1.0
    arrivals: str = "poisson"
    warmup_frames: int = 0
    seed: int = 0

    def __post_init__(self):
        if len(self.hour_multipliers) != 24 or len(self.dow_multipliers) != 7:
            raise ValueError("need 24 hour multipliers and 7 day-of-week multipliers")
        if any(m <= 0 for m in tuple(self.hour_multipliers) + tuple(self.dow_multipliers)):
            raise ValueError("multipliers must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if not 0.0 < self.observability <= 1.0:
            raise ValueError("observability must lie in (0, 1]")
        if self.arrivals not in ("poisson", "deterministic"):
            raise ValueError(f"unknown arrival process {self.arrivals!r}")
        if self.warmup_frames < 0:
            raise ValueError("warmup frames must be >= 0")
        missing = {q.triple for q in self.schedule} - set(self.profits)
        if missing:
            raise ValueError(f"no true profit for {sorted(missing)[:3]}")
        unknown = {q.location for q in self.schedule} - set(self.base_supply)
        if unknown:
            raise ValueError(f"no base supply for locations {sorted(unknown)}")


@dataclass
class World:
    config: WorldConfig
    true_supply: dict[tuple[str, int], float]
    arrivals: dict[tuple[str, int], int]
    true_profit: dict[Quad, float]
    warmup: list[HistoryRecord]

    @property
    def catalog(self) -> Catalog:
        return self.config.catalog

    @property
    def schedule(self) -> AdmissibleSet:
        return self.config.schedule

    @property
    def seed(self) -> int:
        return self.config.seed

    def profit_of(self, triple, frame: int) -> float:
        cfg = self.config
        base = cfg.profits[triple]
        if cfg.profit_drift and frame >= 1:
            base *= 1.0 + cfg.profit_drift * (frame - 1) / max(1, cfg.catalog.n_frames - 1)
        return base


def _traffic_mean(cfg: WorldConfig, location: str, frame: int) -> float:
    when = cfg.catalog.frame_start(frame)
    days = (when - cfg.catalog.epoch).total_seconds() / 86400.0
    s = cfg.base_supply[location] * cfg.dow_multipliers[when.weekday()] * cfg.hour_multipliers[when.hour]
    return s * max(0.0, 1.0 + cfg.supply_trend * days)


def generate_world(cfg: WorldConfig) -> World:
    """Materialise traffic, arrivals and true profits; deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    locations = sorted(cfg.base_supply)
    frames = range(1 - cfg.warmup_frames, cfg.catalog.n_frames + 1)
    true_supply, arrivals = {}, {}
    for k in frames:
        for l in locations:
            s = _traffic_mean(cfg, l, k)
            if cfg.noise_sigma > 0:
                s *= math.exp(cfg.noise_sigma * rng.standard_normal())
            true_supply[(l, k)] = s
            arrivals[(l, k)] = int(rng.poisson(s)) if cfg.arrivals == "poisson" else int(round(s))
    world = World(cfg, true_supply, arrivals, {}, [])
    world.true_profit = {q: world.profit_of(q.triple, q.frame) for q in cfg.schedule}

    # warm-up log: uniform delivery over every triple scheduled at the location
    triples_at = defaultdict(list)
    for t in sorted({q.triple for q in cfg.schedule}):
        triples_at[t[2]].append(t)
    for k in range(1 - cfg.warmup_frames, 1):
        when = cfg.catalog.frame_start(k)
        for l in locations:
            n = arrivals[(l, k)]
            options = triples_at.get(l, [])
            counts = rng.multinomial(n, [1.0 / len(options)] * len(options)) if options else []
            recs = [(t[0], t[1], int(c), c * cfg.profits[t]) for t, c in zip(options, counts)]
            recs.append((UNFILLED, UNFILLED, n - int(sum(counts)), 0.0))
            world.warmup.extend(_observe(rng, cfg.observability, when, l, recs))
    return world


def _observe(rng, fraction, when, location, recs):
    """Log records as seen through the observable share of traffic."""
    out = []
    for campaign, creative, n, profit in recs:
        seen = n if fraction >= 1.0 else int(rng.binomial(n, fraction))
        if seen == 0 and n > 0 and fraction < 1.0:
            continue
        if n == 0 and campaign == UNFILLED:
            continue
        out.append(HistoryRecord(when, location, campaign, creative, seen, profit * seen / n if n else 0.0))
    return out


# ---------------------------------------------------------------- policies


class Policy:
    name = "policy"

    def start(self, world: World, first_frame: int):
        self.world = world

    def plan(self, frame: int) -> DeliveryPlan:
        raise NotImplementedError

    def observe(self, frame: int, records: list[HistoryRecord], spend: Mapping[str, float]):
        pass


class UniformPolicy(Policy):
    name = "uniform"

    def plan(self, frame):
        plan = DeliveryPlan()
        for l in self.world.catalog.locations:
            pairs = [q.pair for q in self.world.schedule.at_node(l, frame)]
            if pairs:
                plan.probabilities[(l, frame)] = {p: 1.0 / len(pairs) for p in pairs}
        return plan


@dataclass
class GreedyState:
    """Book-keeping of the pacing baseline."""

    schedule: AdmissibleSet
    budgets: Mapping[str, float]
    learning_frames: int = 24
    quantile: float = 0.25
    band: float = 0.1
    start_frame: int = 1
    spend: Counter = field(default_factory=Counter)
    node_imps: Counter = field(default_factory=Counter)
    node_profit: Counter = field(default_factory=Counter)
    dropped: set = field(default_factory=set)  # (campaign, location) pairs switched off

    def ecpm(self, campaign: str, location: str) -> float:
        n = self.node_imps[(campaign, location)]
        return self.node_profit[(campaign, location)] / n if n else math.inf

    def record(self, records):
        for r in records:
            if r.filled:
                self.node_imps[(r.campaign, r.location)] += r.impressions
                self.node_profit[(r.campaign, r.location)] += r.profit


def _pace_update(state: GreedyState, frame: int):
    for i, budget in state.budgets.items():
        if math.isinf(budget):
            continue
        frames = [q.frame for q in state.schedule.by_campaign(i)]
        if not frames:
            continue
        first, last = min(frames), max(frames)
        if not first <= frame <= last:
            continue
        elapsed = (frame - first) / (last - first + 1)
        target = budget * elapsed
        if target <= 0:
            continue
        ratio = state.spend[i] / target
        nodes = sorted({q.location for q in state.schedule.by_campaign(i)})
        if ratio > 1.0 + state.band:
            active = [l for l in nodes if (i, l) not in state.dropped]
            if active:
                ecpms = [state.ecpm(i, l) for l in active]
                finite = [e for e in ecpms if math.isfinite(e)]
                if finite:
                    cut = float(np.quantile(finite, state.quantile))
                    state.dropped.update((i, l) for l, e in zip(active, ecpms) if e <= cut)
        elif ratio < 1.0 - state.band:
            state.dropped.difference_update({(i, l) for l in nodes})


def greedy_policy(state: GreedyState, frame: int) -> DeliveryPlan:
    """Uniform during learning; then pace campaigns by switching off their worst nodes.

    A campaign spending ahead of its linear budget pace (beyond ``band``)
    stops at the nodes whose eCPM is at or below the ``quantile`` of its
    active nodes; one falling behind gets all nodes back; one on pace is left
    alone. Slots are split uniformly over the pairs still active.
    """
    learning = frame < state.start_frame + state.learning_frames
    if not learning:
        _pace_update(state, frame)
    plan = DeliveryPlan()
    locations = sorted({q.location for q in state.schedule})
    for l in locations:
        quads = state.schedule.at_node(l, frame)
        if not quads:
            continue
        pairs = [q.pair for q in quads if learning or (q.campaign, l) not in state.dropped]
        probs = {q.pair: 0.0 for q in quads}
        for p in pairs:
            probs[p] = 1.0 / len(pairs)
        plan.probabilities[(l, frame)] = probs
    return plan


class GreedyPolicy(Policy):
    name = "greedy"

    def __init__(self, learning_frames: int = 24, quantile: float = 0.25, band: float = 0.1):
        self.options = dict(learning_frames=learning_frames, quantile=quantile, band=band)

    def start(self, world, first_frame):
        super().start(world, first_frame)
        self.state = GreedyState(world.schedule, dict(world.config.budgets), start_frame=first_frame,
                                 **self.options)
        self.state.record(world.warmup)

    def plan(self, frame):
        return greedy_policy(self.state, frame)

    def observe(self, frame, records, spend):
        self.state.record(records)
        self.state.spend.update(spend)


class OracleProjector:
    """Projections read straight from the world's ground truth."""

    def __init__(self, world: World):
        self.world = world
        self.levels = {}

    def profit(self, campaign, creative, location, when):
        k = self.world.catalog.frame_at(when)
        return ProfitEstimate(self.world.profit_of((campaign, creative, location), k), "oracle")

    def supply(self, location, when):
        return self.world.true_supply.get((location, self.world.catalog.frame_at(when)), 0.0)


class LpEnginePolicy(Policy):
    name = "lp-engine"

    def __init__(self, config: EngineConfig = EngineConfig(), oracle: bool = False,
                 new_triples=(), keep_diagnostics: bool = False):
        self.config = config
        self.oracle = oracle
        self.new_triples = set(new_triples)
        self.keep_diagnostics = keep_diagnostics
        self.diagnostics = []

    def start(self, world, first_frame):
        super().start(world, first_frame)
        factory = (lambda _state: OracleProjector(world)) if self.oracle else None
        self.state = EngineState(
            world.catalog, dict(world.config.budgets), HistoryLog(world.warmup), self.config,
            frame=first_frame, new_triples=self.new_triples, projector_factory=factory,
        )

    def plan(self, frame):
        if max(self.world.schedule.frames(), default=0) < frame:
            return DeliveryPlan()
        plan, diag = plan_cycle(self.state, self.world.schedule)
        if self.keep_diagnostics:
            self.diagnostics.append(diag)
        return plan

    def observe(self, frame, records, spend):
        advance(self.state, frame, records, spend)


def make_policy(name: str, **options) -> Policy:
    if name == "lp-engine":
        return LpEnginePolicy(**options)
    if name == "greedy":
        return GreedyPolicy(**options)
    if name == "uniform":
        return UniformPolicy()
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICIES}")


# ---------------------------------------------------------------- runs


@dataclass
class RunReport:
    policy: str
    seed: int
    total_revenue: float = 0.0
    total_impressions: int = 0
    spend: dict = field(default_factory=dict)
    budgets: dict = field(default_factory=dict)
    overshoot_bound: dict = field(default_factory=dict)
    supply_violations: int = 0
    probability_violations: int = 0
    revenue_series: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    aborted: str | None = None

    def overshoot(self, campaign: str) -> float:
        b = self.budgets.get(campaign, math.inf)
        return 0.0 if math.isinf(b) else max(0.0, self.spend.get(campaign, 0.0) - b)

    def budget_safe(self) -> bool:
        return all(self.overshoot(i) <= self.overshoot_bound.get(i, 0.0) + 1e-9 for i in self.budgets)


def run_policy(world: World, policy: Policy | str, span: Sequence[int] | None = None,
               seed: int | None = None) -> RunReport:
    """Serve traffic with ``policy`` over ``span`` (default: every frame).

    Campaigns whose spend has reached their budget are stopped at the start
    of the next frame; their share of the plan then goes unserved.
    """
    if isinstance(policy, str):
        policy = make_policy(policy)
    cfg = world.config
    span = list(span if span is not None else cfg.catalog.frames)
    rng = np.random.default_rng([world.seed if seed is None else seed, 7])
    report = RunReport(policy.name, world.seed, budgets=dict(cfg.budgets))
    report.spend = {i: 0.0 for i in cfg.catalog.campaigns}
    report.overshoot_bound = {i: 0.0 for i in cfg.catalog.campaigns}
    if not span:
        return report
    policy.start(world, span[0])
    locations = sorted(cfg.base_supply)

    for k in span:
        try:
            plan = policy.plan(k)
        except ContractViolation as exc:
            report.aborted = f"frame {k}: {exc}"
            break
        bad = plan.violations()
        for (l, kk), probs in plan.probabilities.items():
            admissible = {q.pair for q in world.schedule.at_node(l, kk)}
            if kk != k:
                bad.append(f"plan for frame {kk} emitted at frame {k}")
            bad.extend(f"inadmissible pair {p} at {(l, kk)}" for p, v in probs.items() if v > 0 and p not in admissible)
        if bad:
            report.probability_violations += len(bad)
            report.aborted = f"frame {k}: " + "; ".join(bad[:3])
            break

        stopped = {i for i, b in cfg.budgets.items() if report.spend.get(i, 0.0) >= b}
        frame_revenue = 0.0
        frame_spend = Counter()
        observed = []
        when = cfg.catalog.frame_start(k)
        frame_cap = Counter()
        for l in locations:
            n = world.arrivals[(l, k)]
            best = {}
            for q in world.schedule.at_node(l, k):
                best[q.campaign] = max(best.get(q.campaign, 0.0), world.true_profit[q])
            for i, p in best.items():
                frame_cap[i] += n * p
            probs = plan.at(l, k)
            pairs = [p for p, v in sorted(probs.items()) if v > 0 and p[0] not in stopped]
            weights = [probs[p] for p in pairs]
            residual = max(0.0, 1.0 - math.fsum(weights))
            vec = np.array(weights + [residual])
            counts = rng.multinomial(n, vec / vec.sum()) if n > 0 else np.zeros(len(vec), dtype=int)
            delivered = int(counts[:-1].sum())
            if delivered > n:
                report.supply_violations += 1
            recs = []
            for (i, j), c in zip(pairs, counts[:-1]):
                c = int(c)
                if c == 0:
                    continue
                value = c * world.true_profit[Quad(i, j, k, l)]
                frame_revenue += value
                frame_spend[i] += value
                recs.append((i, j, c, value))
            recs.append((UNFILLED, UNFILLED, n - delivered, 0.0))
            report.total_impressions += delivered
            observed.extend(_observe(rng, cfg.observability, when, l, recs))

        for i, s in frame_spend.items():
            report.spend[i] = report.spend.get(i, 0.0) + s
        for i, cap in frame_cap.items():
            report.overshoot_bound[i] = max(report.overshoot_bound.get(i, 0.0), cap)
        report.total_revenue += frame_revenue
        report.revenue_series.append(frame_revenue)
        report.frames.append(k)
        policy.observe(k, observed, dict(frame_spend))
    return report


@dataclass
class Comparison:
    revenues: dict[str, list[float]]
    seeds: list[int]
    reports: dict[str, list[RunReport]] = field(default_factory=dict)

    def mean(self, policy: str) -> float:
        return float(np.mean(self.revenues[policy]))

    def std(self, policy: str) -> float:
        return float(np.std(self.revenues[policy], ddof=1)) if len(self.revenues[policy]) > 1 else 0.0

    def uplift(self, policy: str = "lp-engine", baseline: str = "greedy") -> float:
        base = self.mean(baseline)
        return self.mean(policy) / base - 1.0 if base else math.nan

    def wins(self, policy: str = "lp-engine", baseline: str = "greedy") -> tuple[int, int]:
        """Seeds where ``policy`` earned strictly more / not less than ``baseline``."""
        a, b = self.revenues[policy], self.revenues[baseline]
        return sum(x > y for x, y in zip(a, b)), sum(x >= y for x, y in zip(a, b))

    def sign_test(self, policy: str = "lp-engine", baseline: str = "greedy") -> float:
        """One-sided sign-test p-value for ``policy`` beating ``baseline`` (ties dropped)."""
        a, b = self.revenues[policy], self.revenues[baseline]
        wins = sum(x > y for x, y in zip(a, b))
        n = sum(x != y for x, y in zip(a, b))
        if n == 0:
            return 1.0
        return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0 ** n

    def rows(self):
        for p in self.revenues:
            yield p, self.mean(p), self.std(p)


def compare(config: WorldConfig, policies: Sequence[str | Callable[[], Policy]], seeds: Sequence[int],
            span: Sequence[int] | None = None) -> Comparison:
    """Run each policy on the world generated for each seed."""
    if not seeds:
        raise ImpallocError("compare needs at least one seed")
    factories = {}
    for p in policies:
        if isinstance(p, str):
            factories[p] = (lambda name=p: make_policy(name))
        else:
            factories[p().name] = p
    out = Comparison({name: [] for name in factories}, list(seeds), {name: [] for name in factories})
    for s in seeds:
        world = generate_world(replace(config, seed=s))
        for name, factory in factories.items():
            rep = run_policy(world, factory(), span)
            out.revenues[name].append(rep.total_revenue)
            out.reports[name].append(rep)
    return out


def synthetic_config(seed: int = 0, days: int = 14, warmup_days: int = 14, sigma: float = 0.0,
                     observability: float = 1.0, arrivals: str = "poisson", profit_drift: float = 0.0,
                     supply_trend: float = 0.0, n_locations: int = 4, base: float = 200.0) -> WorldConfig:
    """A small heterogeneous world: three campaigns, four locations, hourly frames.

    Campaign "A" has an unbounded budget; "B" and "C" are budget-limited and
    each is worth most at different locations.
    """
    locations = [f"L{l + 1}" for l in range(n_locations)]
    creatives = {"A": ("a1", "a2"), "B": ("b1",), "C": ("c1",)}
    catalog = Catalog({i: f"campaign {i}" for i in creatives}, creatives, tuple(locations), days * 24)
    # per-impression profits (currency units); eCPM = 1000x these
    gains = {
        "A": [0.0010, 0.0008, 0.0012, 0.0006, 0.0009, 0.0011, 0.0007, 0.0010],
        "B": [0.0040, 0.0005, 0.0030, 0.0004, 0.0035, 0.0006, 0.0025, 0.0005],
        "C": [0.0006, 0.0045, 0.0005, 0.0030, 0.0004, 0.0040, 0.0005, 0.0035],
    }
    profits = {}
    for i, cs in creatives.items():
        for jdx, j in enumerate(cs):
            for ldx, l in enumerate(locations):
                profits[(i, j, l)] = gains[i][ldx % 8] * (1.0 + 0.1 * jdx)
    schedule = AdmissibleSet(
        Quad(i, j, k, l) for i, cs in creatives.items() for j in cs for k in catalog.frames for l in locations
    )
    hours = tuple(0.4 + 0.9 * math.exp(-((h - 13) / 5.0) ** 2) + 0.3 * math.exp(-((h - 20) / 2.0) ** 2)
                  for h in range(24))
    dows = (1.0, 1.05, 1.1, 1.05, 1.0, 0.8, 0.75)
    frames_total = days * 24
    mean_traffic = base * np.mean(hours) * np.mean(dows) * frames_total
    half = float(0.0030 * mean_traffic * 0.5)
    budgets = {"A": math.inf, "B": half, "C": half}
    return WorldConfig(
        catalog, schedule, budgets, profits,
        {l: base * (1.0 + 0.5 * idx) for idx, l in enumerate(locations)},
        hours, dows, sigma, supply_trend, profit_drift, observability, arrivals,
        warmup_days * 24, seed,
    )


def frames_in(catalog: Catalog, days: float) -> int:
    return int(timedelta(days=days) / catalog.frame_duration)


def world_from_log(history: HistoryLog, catalog: Catalog, schedule: AdmissibleSet,
                   budgets: Mapping[str, float]) -> World:
    """Replay world: logged traffic per frame, logged mean profit per triple.

    Records before frame 1 become the warm-up log. A triple never served in
    the log takes its campaign's mean profit, else 0.
    """
    imps, profit = Counter(), Counter()
    camp_imps, camp_profit = Counter(), Counter()
    arrivals = Counter()
    warmup = []
    for r in history:
        k = catalog.frame_at(r.timestamp)
        if k < 1:
            warmup.append(r)
        elif k <= catalog.n_frames:
            arrivals[(r.location, k)] += r.impressions
        if r.filled:
            imps[(r.campaign, r.creative, r.location)] += r.impressions
            profit[(r.campaign, r.creative, r.location)] += r.profit
            camp_imps[r.campaign] += r.impressions
            camp_profit[r.campaign] += r.profit
    profits = {}
    for t in {q.triple for q in schedule}:
        if imps[t]:
            profits[t] = profit[t] / imps[t]
        else:
            profits[t] = camp_profit[t[0]] / camp_imps[t[0]] if camp_imps[t[0]] else 0.0
    cfg = WorldConfig(catalog, schedule, dict(budgets), profits,
                      {l: 1.0 for l in catalog.locations}, arrivals="deterministic")
    supply = {(l, k): float(arrivals[(l, k)]) for l in catalog.locations for k in catalog.frames}
    world = World(cfg, supply, {key: int(v) for key, v in supply.items()}, {}, warmup)
    world.true_profit = {q: profits[q.triple] for q in schedule}
    return world
