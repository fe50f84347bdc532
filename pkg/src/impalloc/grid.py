"""Campaign/creative/location/time grid, admissible sets and configurations.

A point of the grid is a :class:`Quad` ``(campaign, creative, frame, location)``.
Tuple positions 1..4 follow that order, which is the order used by
:func:`project` for its bindings.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from itertools import product
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

from .errors import DomainError

UTC = timezone.utc
DEFAULT_EPOCH = datetime(2010, 4, 1, tzinfo=UTC)


class Quad(NamedTuple):
    campaign: str
    creative: str
    frame: int
    location: str

    @property
    def pair(self) -> tuple[str, str]:
        return (self.campaign, self.creative)

    @property
    def node(self) -> tuple[str, int]:
        """``(location, frame)``, the key used by supply maps."""
        return (self.location, self.frame)

    @property
    def triple(self) -> tuple[str, str, str]:
        """``(campaign, creative, location)``: the quad with its frame dropped."""
        return (self.campaign, self.creative, self.location)


class _Wildcard:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "*"

    def __reduce__(self):
        return (_Wildcard, ())


#: Binding value meaning "drop this component whatever its value".
ANY = _Wildcard()


@dataclass(frozen=True)
class Catalog:
    """Campaigns, their creatives, locations and the frame clock.

    ``creatives`` maps a campaign id to the ids of its creatives; creative ids
    are namespaced by campaign, so two campaigns may both own a creative "1".
    Frame ``k`` (1-based) covers ``[epoch + (k-1)*frame_duration, epoch + k*frame_duration)``.
    """

    campaigns: Mapping[str, str]
    creatives: Mapping[str, Sequence[str]]
    locations: Sequence[str]
    n_frames: int
    epoch: datetime = DEFAULT_EPOCH
    frame_duration: timedelta = timedelta(hours=1)

    def __post_init__(self):
        if self.n_frames < 1:
            raise DomainError("a catalog needs at least one frame")
        if len(set(self.locations)) != len(self.locations):
            raise DomainError("duplicate location id")
        for campaign, creatives in self.creatives.items():
            if campaign not in self.campaigns:
                raise DomainError(f"creatives listed for unknown campaign {campaign!r}")
            if len(set(creatives)) != len(creatives):
                raise DomainError(f"duplicate creative id in campaign {campaign!r}")
        if self.frame_duration <= timedelta(0):
            raise DomainError("frame duration must be positive")
        if self.epoch.tzinfo is None:
            raise DomainError("epoch must be timezone-aware (UTC)")

    @property
    def frames(self) -> range:
        return range(1, self.n_frames + 1)

    def pairs(self) -> list[tuple[str, str]]:
        return [(i, j) for i in self.campaigns for j in self.creatives.get(i, ())]

    def frame_start(self, frame: int) -> datetime:
        return self.epoch + (frame - 1) * self.frame_duration

    def frame_at(self, when: datetime) -> int:
        """Frame index containing ``when``; may fall outside ``1..n_frames``."""
        return int((when - self.epoch) // self.frame_duration) + 1

    def has_pair(self, campaign: str, creative: str) -> bool:
        return creative in self.creatives.get(campaign, ())


class AdmissibleSet:
    """Immutable set of admissible quads with secondary indexes.

    The indexes make the cardinalities used by the feasibility bounds cheap:
    quads by campaign, by ``(frame, location)``, by ``(campaign, frame)`` and
    by ``(campaign, creative)``.
    """

    __slots__ = ("_points", "_by_campaign", "_by_node", "_by_campaign_frame", "_by_pair", "_sorted")

    def __init__(self, points: Iterable[Quad] = (), _ordered: bool = False):
        if _ordered:
            ordered = tuple(points)
            pts = frozenset(ordered)
        else:
            pts = frozenset(q if type(q) is Quad else Quad(*q) for q in points)
            ordered = tuple(sorted(pts))
        by_campaign = defaultdict(list)
        by_node = defaultdict(list)
        by_cf = defaultdict(list)
        by_pair = defaultdict(list)
        for q in ordered:
            by_campaign[q.campaign].append(q)
            by_node[(q.frame, q.location)].append(q)
            by_cf[(q.campaign, q.frame)].append(q)
            by_pair[q.pair].append(q)
        self._points = pts
        self._sorted = ordered
        self._by_campaign = {k: tuple(v) for k, v in by_campaign.items()}
        self._by_node = {k: tuple(v) for k, v in by_node.items()}
        self._by_campaign_frame = {k: tuple(v) for k, v in by_cf.items()}
        self._by_pair = {k: tuple(v) for k, v in by_pair.items()}

    def __contains__(self, quad) -> bool:
        return quad in self._points

    def __iter__(self) -> Iterator[Quad]:
        return iter(self._sorted)

    def __len__(self) -> int:
        return len(self._points)

    def __eq__(self, other) -> bool:
        if isinstance(other, AdmissibleSet):
            return self._points == other._points
        if isinstance(other, (set, frozenset)):
            return self._points == other
        return NotImplemented

    def __hash__(self):
        return hash(self._points)

    def __repr__(self):
        return f"AdmissibleSet({len(self)} quads)"

    def ordered(self) -> tuple[Quad, ...]:
        """Quads in lexicographic order; the canonical variable order."""
        return self._sorted

    def campaigns(self) -> list[str]:
        return sorted(self._by_campaign)

    def frames(self) -> list[int]:
        return sorted({k for k, _ in self._by_node})

    def nodes(self) -> list[tuple[str, int]]:
        """Distinct ``(location, frame)`` keys, sorted by frame then location."""
        return [(l, k) for k, l in sorted(self._by_node)]

    def by_campaign(self, campaign: str) -> tuple[Quad, ...]:
        return self._by_campaign.get(campaign, ())

    def at_node(self, location: str, frame: int) -> tuple[Quad, ...]:
        return self._by_node.get((frame, location), ())

    def by_campaign_frame(self, campaign: str, frame: int) -> tuple[Quad, ...]:
        return self._by_campaign_frame.get((campaign, frame), ())

    def by_pair(self, campaign: str, creative: str) -> tuple[Quad, ...]:
        return self._by_pair.get((campaign, creative), ())

    def filter(self, predicate) -> "AdmissibleSet":
        return AdmissibleSet([q for q in self._sorted if predicate(q)], _ordered=True)


def full_grid(catalog: Catalog) -> AdmissibleSet:
    """Every (pair, frame, location) combination of the catalog."""
    return AdmissibleSet(
        Quad(i, j, k, l)
        for (i, j), k, l in product(catalog.pairs(), catalog.frames, catalog.locations)
    )


def project(points: Iterable[tuple], bindings: Sequence[tuple[int, object]]) -> set[tuple]:
    """Tuple-set projection with parallel removals.

    Each binding is ``(position, value)`` with 1-based ``position``. A concrete
    value keeps only tuples carrying that value there; :data:`ANY` keeps all.
    Bound positions are then removed from the surviving tuples, so the result
    is a set of shorter tuples (duplicates collapse).

    >>> sorted(project({(1, 1, 1, "L1"), (1, 1, 2, "L1")}, [(1, 1), (2, ANY), (4, ANY)]))
    [(1,), (2,)]
    """
    positions = [p for p, _ in bindings]
    if len(set(positions)) != len(positions):
        raise DomainError(f"repeated position in bindings {positions}")
    fixed = []
    for pos, value in bindings:
        if not isinstance(pos, int) or isinstance(pos, bool) or not 1 <= pos <= 4:
            raise DomainError(f"projection position must be 1..4, got {pos!r}")
        if value is not ANY:
            fixed.append((pos - 1, value))
    dropped = {p - 1 for p in positions}

    if isinstance(points, AdmissibleSet):
        # narrow the scan with an index when one component is bound
        bound = dict(fixed)
        if 0 in bound:
            points = points.by_campaign(bound[0])
        elif 2 in bound and 3 in bound:
            points = points.at_node(bound[3], bound[2])

    out = set()
    for t in points:
        if len(t) != 4:
            raise DomainError(f"expected 4-tuples, got {t!r}")
        if all(t[i] == v for i, v in fixed):
            out.add(tuple(x for i, x in enumerate(t) if i not in dropped))
    return out


class Configuration(Mapping[Quad, float]):
    """Sparse impression counts over an admissible set; absent keys are 0."""

    def __init__(self, admissible: AdmissibleSet, values: Mapping[Quad, float] | None = None):
        vals = {}
        for q, x in (values or {}).items():
            q = Quad(*q)
            if q not in admissible:
                raise DomainError(f"configuration key {q} is not admissible")
            if not x >= 0:
                raise DomainError(f"negative impressions {x} at {q}")
            if x:
                vals[q] = float(x)
        self.admissible = admissible
        self._values = vals

    def __getitem__(self, quad) -> float:
        if quad not in self.admissible:
            raise KeyError(quad)
        return self._values.get(quad, 0.0)

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def total(self) -> float:
        return sum(self._values.values())

    def __repr__(self):
        return f"Configuration({len(self)} nonzero of {len(self.admissible)})"


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    def __bool__(self):
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


def validate_catalog(catalog: Catalog, admissible: Iterable[Quad]) -> ValidationReport:
    """List every quad that references an id unknown to ``catalog``.

    One message per offending quad. An empty report means consistent.
    """
    report = ValidationReport()
    locations = set(catalog.locations)
    for q in admissible:
        problems = []
        if q.campaign not in catalog.campaigns:
            problems.append(f"unknown campaign {q.campaign!r}")
        elif not catalog.has_pair(q.campaign, q.creative):
            problems.append(f"creative {q.creative!r} does not belong to campaign {q.campaign!r}")
        if q.location not in locations:
            problems.append(f"unknown location {q.location!r}")
        if not 1 <= q.frame <= catalog.n_frames:
            problems.append(f"frame {q.frame} outside 1..{catalog.n_frames}")
        if problems:
            report.violations.append(f"{tuple(q)}: " + "; ".join(problems))
    return report
