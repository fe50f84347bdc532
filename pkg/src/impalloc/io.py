"""CSV formats for history, schedule, campaigns and plans.

Every file is UTF-8 with a header row. Parsers reject bad rows with a
``path:line`` message instead of coercing them.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Iterable, Sequence

from .engine import DeliveryPlan
from .errors import ParseError
from .grid import DEFAULT_EPOCH, AdmissibleSet, Catalog, Quad
from .history import HistoryLog, HistoryRecord

HISTORY_COLUMNS = ("timestamp_utc", "location_id", "campaign_id", "creative_id", "impressions", "profit")
SCHEDULE_COLUMNS = ("campaign_id", "creative_id", "location_id", "frame_start", "frame_end", "new_flag")
CAMPAIGN_COLUMNS = ("campaign_id", "budget")
PLAN_COLUMNS = ("frame", "location_id", "campaign_id", "creative_id", "probability")

SIX_PLACES = Decimal("0.000001")


def atomic_write(path, text: str):
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "nan")
    s = str(v)
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def _rows(path, columns: Sequence[str]):
    """Yield ``(line_number, {column: text})`` for each data row."""
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=str(path))
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("missing header row", path=str(path), line=1)
        header = [h.strip() for h in header]
        if sorted(header) != sorted(columns):
            raise ParseError(f"expected columns {', '.join(columns)}; got {', '.join(header)}",
                             path=str(path), line=1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", path=str(path), line=line)
            yield line, {h: c.strip() for h, c in zip(header, row)}


def _fail(path, line, message):
    raise ParseError(message, path=str(path), line=line)


def _nonneg_int(path, line, name, text) -> int:
    try:
        v = int(text)
    except ValueError:
        _fail(path, line, f"{name} must be an integer, got {text!r}")
    if v < 0:
        _fail(path, line, f"{name} must be >= 0, got {v}")
    return v


def _nonneg_float(path, line, name, text) -> float:
    try:
        v = float(text)
    except ValueError:
        _fail(path, line, f"{name} must be a number, got {text!r}")
    if not math.isfinite(v) or v < 0:
        _fail(path, line, f"{name} must be a finite number >= 0, got {text!r}")
    return v


def _id(path, line, name, text) -> str:
    if not text:
        _fail(path, line, f"empty {name}")
    return text


def parse_utc(text: str) -> datetime:
    """ISO-8601 timestamp with an explicit zero UTC offset (``Z`` accepted)."""
    t = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
    when = datetime.fromisoformat(t)
    if when.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no UTC offset")
    if when.utcoffset() != timedelta(0):
        raise ValueError(f"timestamp {text!r} is not UTC")
    return when.astimezone(timezone.utc)


def load_history(path) -> HistoryLog:
    """History CSV; rows with empty campaign and creative ids are unfilled traffic."""
    records = []
    for line, row in _rows(path, HISTORY_COLUMNS):
        try:
            when = parse_utc(row["timestamp_utc"])
        except ValueError as exc:
            _fail(path, line, str(exc))
        campaign, creative = row["campaign_id"], row["creative_id"]
        if bool(campaign) != bool(creative):
            _fail(path, line, "campaign_id and creative_id must both be set or both be empty")
        location = _id(path, line, "location_id", row["location_id"])
        imps = _nonneg_int(path, line, "impressions", row["impressions"])
        profit = _nonneg_float(path, line, "profit", row["profit"])
        if not campaign and profit > 0:
            _fail(path, line, "unfilled traffic cannot carry profit")
        records.append(HistoryRecord(when, location, campaign, creative, imps, profit))
    return HistoryLog(records)


def write_history(history: Iterable[HistoryRecord], path):
    rows = sorted(history, key=lambda r: (r.timestamp, r.location, r.campaign, r.creative))
    write_csv(path, HISTORY_COLUMNS, (
        (r.timestamp.astimezone(timezone.utc).isoformat(), r.location, r.campaign, r.creative,
         int(r.impressions), float(r.profit))
        for r in rows
    ))


def load_campaigns(path) -> dict[str, float]:
    """Campaign budgets; ``inf`` marks an unbounded campaign."""
    budgets = {}
    for line, row in _rows(path, CAMPAIGN_COLUMNS):
        cid = _id(path, line, "campaign_id", row["campaign_id"])
        if cid in budgets:
            _fail(path, line, f"duplicate campaign {cid!r}")
        text = row["budget"]
        if text.lower() == "inf":
            budgets[cid] = math.inf
            continue
        try:
            b = float(text)
        except ValueError:
            _fail(path, line, f"budget must be a number or 'inf', got {text!r}")
        if not math.isfinite(b) or b <= 0:
            _fail(path, line, f"budget must be > 0, got {text!r}")
        budgets[cid] = b
    return budgets


def write_campaigns(budgets: dict[str, float], path):
    write_csv(path, CAMPAIGN_COLUMNS, ((i, "inf" if math.isinf(b) else float(b)) for i, b in budgets.items()))


@dataclass(frozen=True)
class ScheduleRow:
    campaign: str
    creative: str
    location: str
    frame_start: int
    frame_end: int
    new: bool = False
    line: int = 0

    def quads(self):
        for k in range(self.frame_start, self.frame_end + 1):
            yield Quad(self.campaign, self.creative, k, self.location)


def read_schedule(path) -> list[ScheduleRow]:
    rows = []
    for line, row in _rows(path, SCHEDULE_COLUMNS):
        start = _nonneg_int(path, line, "frame_start", row["frame_start"])
        end = _nonneg_int(path, line, "frame_end", row["frame_end"])
        if start < 1:
            _fail(path, line, "frames are numbered from 1")
        if end < start:
            _fail(path, line, f"frame_end {end} precedes frame_start {start}")
        if row["new_flag"] not in ("0", "1"):
            _fail(path, line, f"new_flag must be 0 or 1, got {row['new_flag']!r}")
        rows.append(ScheduleRow(
            _id(path, line, "campaign_id", row["campaign_id"]),
            _id(path, line, "creative_id", row["creative_id"]),
            _id(path, line, "location_id", row["location_id"]),
            start, end, row["new_flag"] == "1", line,
        ))
    return rows


def catalog_from(budgets: dict[str, float], rows: Sequence[ScheduleRow], epoch: datetime = DEFAULT_EPOCH,
                 frame_duration: timedelta = timedelta(hours=1), path=None) -> Catalog:
    """Catalog spanned by the campaigns file and the schedule rows."""
    creatives: dict[str, list[str]] = {i: [] for i in budgets}
    locations: list[str] = []
    for r in rows:
        if r.campaign not in budgets:
            _fail(path, r.line, f"unknown campaign {r.campaign!r}")
        if r.creative not in creatives[r.campaign]:
            creatives[r.campaign].append(r.creative)
        if r.location not in locations:
            locations.append(r.location)
    n_frames = max((r.frame_end for r in rows), default=1)
    return Catalog({i: i for i in budgets}, {i: tuple(c) for i, c in creatives.items()}, tuple(locations),
                   n_frames, epoch, frame_duration)


def schedule_set(rows: Sequence[ScheduleRow], catalog: Catalog, path=None) -> AdmissibleSet:
    quads = set()
    for r in rows:
        if r.campaign not in catalog.campaigns:
            _fail(path, r.line, f"unknown campaign {r.campaign!r}")
        if not catalog.has_pair(r.campaign, r.creative):
            _fail(path, r.line, f"unknown creative {r.creative!r} of campaign {r.campaign!r}")
        if r.location not in catalog.locations:
            _fail(path, r.line, f"unknown location {r.location!r}")
        if r.frame_end > catalog.n_frames:
            _fail(path, r.line, f"frame_end {r.frame_end} beyond the catalog's {catalog.n_frames} frames")
        quads.update(r.quads())
    return AdmissibleSet(quads)


def load_schedule(path, catalog: Catalog) -> AdmissibleSet:
    """Expand each row to one quad per frame in ``[frame_start, frame_end]``; overlaps union."""
    return schedule_set(read_schedule(path), catalog, path)


def new_triples(rows: Sequence[ScheduleRow]) -> set[tuple[str, str, str]]:
    return {(r.campaign, r.creative, r.location) for r in rows if r.new}


def write_schedule(admissible: AdmissibleSet, path, new: set = frozenset()):
    """One row per quad; loading the file gives back the same set."""
    write_csv(path, SCHEDULE_COLUMNS, (
        (q.campaign, q.creative, q.location, q.frame, q.frame, int(q.triple in new))
        for q in admissible.ordered()
    ))


def format_probability(p: float) -> str:
    """Six decimals, ties to even, computed from the float's shortest repr."""
    return str(Decimal(repr(float(p))).quantize(SIX_PLACES, rounding=ROUND_HALF_EVEN))


def emit_plan(plan: DeliveryPlan, path):
    """Write the plan CSV; identical plans give byte-identical files."""
    write_csv(path, PLAN_COLUMNS, ((k, l, i, j, format_probability(p)) for k, l, i, j, p in plan.rows()))


def load_plan(path) -> DeliveryPlan:
    plan = DeliveryPlan()
    for line, row in _rows(path, PLAN_COLUMNS):
        k = _nonneg_int(path, line, "frame", row["frame"])
        p = _nonneg_float(path, line, "probability", row["probability"])
        if p > 1:
            _fail(path, line, f"probability {p} > 1")
        node = plan.probabilities.setdefault((row["location_id"], k), {})
        node[(row["campaign_id"], row["creative_id"])] = p
    return plan
