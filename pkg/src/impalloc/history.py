"""Append-only delivery log with the indexes the projections walk.

A record is pre-aggregated per frame: impressions served and profit earned by
one creative at one location during the frame starting at ``timestamp``.
Traffic that was served no ad is logged with empty campaign and creative ids;
it counts towards supply but never towards profit averages.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, NamedTuple

UNFILLED = ""


class HistoryRecord(NamedTuple):
    timestamp: datetime
    location: str
    campaign: str
    creative: str
    impressions: int
    profit: float

    @property
    def filled(self) -> bool:
        return self.campaign != UNFILLED


def time_class(when: datetime, similarity: str):
    """Calendar bucket used to decide whether two times are "similar"."""
    if similarity == "hour_dow":
        return (when.hour, when.weekday())
    if similarity == "hour":
        return (when.hour,)
    if similarity == "any":
        return ()
    raise ValueError(f"unknown similarity {similarity!r}")


SIMILARITIES = ("hour_dow", "hour", "any")


@dataclass
class Series:
    """Records of one index key, ordered by time."""

    times: list
    entries: list

    def insert(self, ts: float, entry):
        if not self.times or ts >= self.times[-1]:
            self.times.append(ts)
            self.entries.append(entry)
        else:
            pos = bisect.bisect_right(self.times, ts)
            self.times.insert(pos, ts)
            self.entries.insert(pos, entry)

    def before(self, ts: float) -> int:
        """Number of entries strictly earlier than ``ts``."""
        return bisect.bisect_left(self.times, ts)


def _new_series():
    return Series([], [])


class HistoryLog:
    """Delivery history; single writer, any number of readers."""

    def __init__(self, records: Iterable[HistoryRecord] = ()):
        self._records: list[HistoryRecord] = []
        # (kind, key..., class) -> Series; kind in {"triple", "loc", "pair", "camp"}
        self._index: dict[tuple, Series] = {}
        # location -> {ts: total impressions}, plus sorted timestamps
        self._supply: dict[str, dict[float, float]] = {}
        self._supply_times: dict[str, list[float]] = {}
        self._last_ts = float("-inf")
        self.extend(sorted(records, key=lambda r: r.timestamp))

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    @property
    def records(self) -> list[HistoryRecord]:
        return list(self._records)

    @property
    def last_timestamp(self) -> float:
        """POSIX seconds of the newest record (``-inf`` when empty)."""
        return self._last_ts

    def snapshot(self) -> "HistoryLog":
        return HistoryLog(self._records)

    def extend(self, records: Iterable[HistoryRecord]):
        for r in records:
            self.append(r)

    def append(self, r: HistoryRecord):
        if r.impressions < 0 or r.profit < 0:
            raise ValueError(f"negative impressions or profit in {r}")
        if r.timestamp.tzinfo is None:
            raise ValueError(f"naive timestamp in {r}")
        self._records.append(r)
        ts = r.timestamp.timestamp()
        self._last_ts = max(self._last_ts, ts)

        per_loc = self._supply.setdefault(r.location, {})
        if ts not in per_loc:
            per_loc[ts] = 0.0
            times = self._supply_times.setdefault(r.location, [])
            if not times or ts > times[-1]:
                times.append(ts)
            else:
                bisect.insort(times, ts)
        per_loc[ts] += r.impressions

        if not r.filled or r.impressions == 0:
            return
        entry = (ts, r.impressions, r.profit, r.campaign, r.creative)
        keys = (
            ("triple", r.campaign, r.creative, r.location),
            ("loc", r.location),
            ("pair", r.campaign, r.creative),
            ("camp", r.campaign),
        )
        classes = [time_class(r.timestamp, s) for s in SIMILARITIES]
        for key in keys:
            for cls in classes:
                self._index.setdefault(key + (cls,), _new_series()).insert(ts, entry)

    def series(self, kind: str, *key, cls=()) -> Series:
        return self._index.get((kind,) + tuple(key) + (cls,), _EMPTY)

    def supply_at(self, location: str, ts: float) -> float | None:
        """Total logged traffic at ``location`` in the frame starting at ``ts``."""
        return self._supply.get(location, {}).get(ts)

    def supply_series(self, location: str) -> tuple[list[float], list[float]]:
        times = self._supply_times.get(location, [])
        per_loc = self._supply.get(location, {})
        return times, [per_loc[t] for t in times]

    def locations(self) -> list[str]:
        return sorted(self._supply)


_EMPTY = Series((), ())
