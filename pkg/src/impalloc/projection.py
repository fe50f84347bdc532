"""Projecting future impression profits and supply from a :class:`HistoryLog`."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .history import HistoryLog, Series, time_class

WEEK = timedelta(days=7)


@dataclass(frozen=True)
class ProjectionParams:
    n_min: float = 50.0
    half_life: timedelta = timedelta(days=7)
    similarity: str = "hour_dow"
    w_loc: float = 0.5
    lookback: timedelta = timedelta(days=28)
    prior_profit: float = 0.0
    level4_order: tuple[str, str] = ("campaign", "location")
    supply_weights: tuple[float, float] = (0.6, 0.4)

    def __post_init__(self):
        if self.n_min < 1:
            raise ValueError("n_min must be >= 1")
        if not 0.0 <= self.w_loc <= 1.0:
            raise ValueError("w_loc must lie in [0, 1]")
        if any(not 0.0 <= w <= 1.0 for w in self.supply_weights):
            raise ValueError("supply weights must lie in [0, 1]")
        if self.half_life <= timedelta(0) or self.lookback <= timedelta(0):
            raise ValueError("half-life and lookback must be positive")
        if sorted(self.level4_order) != ["campaign", "location"]:
            raise ValueError("level4_order must order 'campaign' and 'location'")
        if self.prior_profit < 0:
            raise ValueError("prior profit must be >= 0")
        time_class(datetime(2000, 1, 1), self.similarity)


class ProfitEstimate(NamedTuple):
    value: float
    level: object  # 1..4 or "prior"


def _nearest_enough(series: Series, target: float, params: ProjectionParams, skip_creative=None):
    """Recency-weighted profit per impression over the newest records before ``target``.

    Walks back from ``target`` until ``n_min`` impressions are collected,
    always taking every record of a timestamp together; returns ``None`` if
    the series runs out first.
    """
    tau = params.half_life.total_seconds()
    imps = 0.0
    num = den = 0.0
    enough_at = None
    for pos in range(series.before(target) - 1, -1, -1):
        ts, n, profit, _campaign, creative = series.entries[pos]
        if enough_at is not None and ts != enough_at:
            break
        if skip_creative is not None and creative == skip_creative:
            continue
        w = math.exp(-(target - ts) / tau)
        num += w * profit
        den += w * n
        imps += n
        if enough_at is None and imps >= params.n_min:
            enough_at = ts
    return num / den if enough_at is not None else None


def project_profit(history: HistoryLog, campaign: str, creative: str, location: str,
                   when: datetime, params: ProjectionParams = ProjectionParams()) -> ProfitEstimate:
    """Expected profit of one impression of ``(campaign, creative)`` at ``location``.

    Falls back from the most specific evidence to the least:

    1. same creative and location at similar times;
    2. blend of same location (any creative) and same creative (any location),
       both at similar times;
    3. as 2 with the campaign's other creatives in place of this one;
    4. same campaign at any time, then same location at any time
       (order set by ``params.level4_order``);

    and finally ``params.prior_profit``.
    """
    target = when.timestamp()
    cls = time_class(when, params.similarity)

    est = _nearest_enough(history.series("triple", campaign, creative, location, cls=cls), target, params)
    if est is not None:
        return ProfitEstimate(est, 1)

    at_loc = _nearest_enough(history.series("loc", location, cls=cls), target, params)
    if at_loc is not None:
        same_creative = _nearest_enough(history.series("pair", campaign, creative, cls=cls), target, params)
        if same_creative is not None:
            return ProfitEstimate(params.w_loc * at_loc + (1 - params.w_loc) * same_creative, 2)
        siblings = _nearest_enough(history.series("camp", campaign, cls=cls), target, params,
                                   skip_creative=creative)
        if siblings is not None:
            return ProfitEstimate(params.w_loc * at_loc + (1 - params.w_loc) * siblings, 3)

    for which in params.level4_order:
        s = history.series("camp", campaign) if which == "campaign" else history.series("loc", location)
        est = _nearest_enough(s, target, params)
        if est is not None:
            return ProfitEstimate(est, 4)
    return ProfitEstimate(params.prior_profit, "prior")


class SupplyEstimate(NamedTuple):
    value: float
    source: str  # "weighted", "lookback" or "no-data"


def project_supply_weighted(history: HistoryLog, location: str, when: datetime,
                            params: ProjectionParams = ProjectionParams()) -> SupplyEstimate:
    """Weighted mean of the traffic one and two weeks before ``when``.

    Missing weeks drop out and the remaining weights are renormalised. With
    neither week observed, the mean over the lookback window at the same hour
    of day is used; with nothing at all the estimate is 0.
    """
    t = when.timestamp()
    obs = []
    for a, w in enumerate(params.supply_weights, start=1):
        s = history.supply_at(location, t - a * WEEK.total_seconds())
        if s is not None:
            obs.append((w, s))
    wsum = sum(w for w, _ in obs)
    if obs and wsum > 0:
        return SupplyEstimate(sum(w * s for w, s in obs) / wsum, "weighted")

    times, values = history.supply_series(location)
    start = bisect.bisect_left(times, t - params.lookback.total_seconds())
    stop = bisect.bisect_left(times, t)
    hour = when.hour
    # timestamps are UTC POSIX seconds, so the hour of day is (ts mod 1 day) // 1 hour
    same_hour = [values[p] for p in range(start, stop) if int(times[p] % 86400 // 3600) == hour]
    if same_hour:
        return SupplyEstimate(sum(same_hour) / len(same_hour), "lookback")
    return SupplyEstimate(0.0, "no-data")


@dataclass(frozen=True)
class FeatureSpec:
    """Periodic calendar features for the supply regressor.

    ``log_target`` fits the logarithm of traffic, turning multiplicative
    day/hour effects into additive ones.
    """

    intercept: bool = True
    trend: bool = True
    hour_of_day: bool = True
    day_of_week: bool = True
    log_target: bool = False

    @property
    def dimension(self) -> int:
        return int(self.intercept) + int(self.trend) + 24 * self.hour_of_day + 7 * self.day_of_week

    def features(self, when: datetime, origin: float) -> np.ndarray:
        f = []
        if self.intercept:
            f.append(1.0)
        if self.trend:
            f.append((when.timestamp() - origin) / 86400.0)
        if self.hour_of_day:
            h = [0.0] * 24
            h[when.hour] = 1.0
            f.extend(h)
        if self.day_of_week:
            d = [0.0] * 7
            d[when.weekday()] = 1.0
            f.extend(d)
        return np.array(f)


RIDGE = 1e-6


@dataclass
class ForecastModel:
    spec: FeatureSpec
    origin: float
    tz: object
    weights: dict[str, np.ndarray] = field(default_factory=dict)
    in_sample_mape: dict[str, float] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)

    def predict(self, location: str, when: datetime) -> float:
        return predict_supply(self, location, when)


def _design(spec: FeatureSpec, stamps, origin, tz) -> np.ndarray:
    return np.array([spec.features(datetime.fromtimestamp(ts, tz), origin) for ts in stamps])


def fit_supply_regressor(history: HistoryLog, spec: FeatureSpec = FeatureSpec(), tz=None) -> ForecastModel:
    """Per-location ridge-damped least squares of traffic on calendar features.

    Locations with fewer than ``2 * spec.dimension`` observations are skipped
    and listed in ``excluded``.
    """
    from .grid import UTC

    tz = tz or UTC
    all_times = [t for loc in history.locations() for t in history.supply_series(loc)[0]]
    origin = min(all_times) if all_times else 0.0
    model = ForecastModel(spec, origin, tz)
    dim = spec.dimension
    for loc in history.locations():
        times, values = history.supply_series(loc)
        if len(times) < 2 * dim:
            model.excluded.append(loc)
            continue
        X = _design(spec, times, origin, tz)
        y = np.asarray(values, dtype=float)
        target = np.log(np.maximum(y, 1.0)) if spec.log_target else y
        w = np.linalg.solve(X.T @ X + RIDGE * np.eye(dim), X.T @ target)
        model.weights[loc] = w
        fitted = X @ w
        if spec.log_target:
            fitted = np.exp(fitted)
        fitted = np.maximum(fitted, 0.0)
        nz = y > 0
        model.in_sample_mape[loc] = float(np.mean(np.abs(fitted[nz] - y[nz]) / y[nz])) if nz.any() else 0.0
    return model


def predict_supply(model: ForecastModel, location: str, when: datetime) -> float:
    w = model.weights.get(location)
    if w is None:
        raise DomainError(f"no supply model for location {location!r}")
    raw = float(model.spec.features(when, model.origin) @ w)
    if model.spec.log_target:
        return math.exp(raw)
    return max(0.0, raw)


def mape(actual, predicted) -> float:
    """Mean absolute percentage error over entries with nonzero ``actual``."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    nz = a != 0
    return float(np.mean(np.abs(p[nz] - a[nz]) / np.abs(a[nz])))


class HistoryProjector:
    """Profit and supply projections over one history snapshot, memoised.

    For targets later than every logged record, the profit ladder depends
    only on the quad's (campaign, creative, location) and its time class (the
    recency weights share the factor ``exp(-target / tau)``, which cancels),
    so those estimates are cached per class. After the shared history grows,
    :meth:`invalidate` drops exactly the entries the new records can change.
    """

    def __init__(self, history: HistoryLog, params: ProjectionParams = ProjectionParams(),
                 supply_model: ForecastModel | None = None):
        self.history = history
        self.params = params
        self.supply_model = supply_model
        self._profit_cache = {}
        self._supply_cache = {}
        self.levels: dict = {}

    def set_supply_model(self, model: ForecastModel | None):
        self.supply_model = model
        self._supply_cache.clear()

    def invalidate(self, records):
        """Forget the estimates that ``records`` (already in the history) may change."""
        sim = self.params.similarity
        classes = {time_class(r.timestamp, sim) for r in records if r.filled and r.impressions > 0}
        if classes:
            self._profit_cache = {
                key: est for key, est in self._profit_cache.items()
                if isinstance(key[3], tuple) and key[3] not in classes and est.level in (1, 2, 3)
            }
        new_ts = {}
        for r in records:
            new_ts.setdefault(r.location, set()).add(r.timestamp.timestamp())
        if not new_ts:
            return
        week = WEEK.total_seconds()
        keep = {}
        for (loc, when), (val, source) in self._supply_cache.items():
            stamps = new_ts.get(loc)
            if stamps is not None:
                t = when.timestamp()
                if source != "weighted" or (t - week) in stamps or (t - 2 * week) in stamps:
                    continue
            keep[(loc, when)] = (val, source)
        self._supply_cache = keep

    def profit(self, campaign: str, creative: str, location: str, when: datetime) -> ProfitEstimate:
        if when.timestamp() > self.history.last_timestamp:
            key = (campaign, creative, location, time_class(when, self.params.similarity))
        else:
            key = (campaign, creative, location, when)
        est = self._profit_cache.get(key)
        if est is None:
            est = project_profit(self.history, campaign, creative, location, when, self.params)
            self._profit_cache[key] = est
        self.levels[est.level] = self.levels.get(est.level, 0) + 1
        return est

    def supply(self, location: str, when: datetime) -> float:
        key = (location, when)
        hit = self._supply_cache.get(key)
        if hit is None:
            if self.supply_model is not None and location in self.supply_model.weights:
                hit = (predict_supply(self.supply_model, location, when), "regressor")
            else:
                hit = project_supply_weighted(self.history, location, when, self.params)
            self._supply_cache[key] = hit
        return hit[0]
