"""``key = value`` configuration files.

Lines starting with ``#`` and blank lines are ignored. Relative paths are
resolved against the directory holding the config file. The environment
variable ``IMPALLOC_CONFIG`` may name the config file; command-line flags
override anything read from it.

Run keys:

============== =========================================== ==============
key            meaning                                     default
============== =========================================== ==============
history        history CSV                                 (required)
schedule       schedule CSV                                (required)
campaigns      campaigns CSV                               (required)
output         plan / report output path                   plan.csv
epoch          start of frame 1, ISO-8601 UTC              2010-04-01T00:00:00Z
frame_hours    frame length in hours, > 0                  1
frame          frame to plan for, >= 1                     1
horizon        frames optimised individually, >= 1         24
gamma          per-frame risk discount in (0, 1]           0.95
n_min          impressions per profit estimate, >= 1       50
half_life_days recency half-life, > 0                      7
similarity     hour_dow, hour or any                       hour_dow
w_loc          location weight in blended estimates [0,1]  0.5
lookback_days  supply fallback window, > 0                 28
prior_profit   last-resort profit per impression, >= 0     0
supply_method  weighted or regressor                       weighted
lasting_min    per-campaign per-frame minimum, >= 0        0
learning_min   minimum for new (creative, location), >= 0  0
overflow_frac  per-quad share cap in [0, 1] or "off"       off
max_iterations simplex pivot cap (>= 1) or "auto"          auto
anti_cycling   dantzig-bland or bland                      dantzig-bland
============== =========================================== ==============

World keys (for ``simulate``/``compare``): days, warmup_days, sigma,
observability, arrivals, profit_drift, supply_trend, locations, base_supply,
seed; see :func:`world_config`.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace
from datetime import datetime, timedelta
from pathlib import Path

from .engine import EngineConfig
from .errors import ParseError
from .grid import DEFAULT_EPOCH
from .projection import ProjectionParams
from .simplex import SolverSettings

ENV_VAR = "IMPALLOC_CONFIG"


def read_key_values(path) -> dict[str, tuple[str, int]]:
    """``{key: (raw value, line number)}``; a repeated key is an error."""
    out = {}
    path = Path(path)
    if not path.exists():
        raise ParseError("config file not found", path=str(path))
    for n, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ParseError(f"expected 'key = value', got {raw!r}", path=str(path), line=n)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", path=str(path), line=n)
        out[key] = (value, n)
    return out


def _number(kind, lo=None, hi=None, lo_open=False):
    def parse(text):
        v = kind(text)
        if isinstance(v, float) and not math.isfinite(v):
            raise ValueError("must be finite")
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ValueError(f"must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and v > hi:
            raise ValueError(f"must be <= {hi}")
        return v
    return parse


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _optional(parse, none_word):
    def wrapped(text):
        return None if text == none_word else parse(text)
    return wrapped


def _epoch(text):
    from .io import parse_utc

    return parse_utc(text)


RUN_KEYS = {
    "history": str,
    "schedule": str,
    "campaigns": str,
    "output": str,
    "epoch": _epoch,
    "frame_hours": _number(float, 0.0, lo_open=True),
    "frame": _number(int, 1),
    "horizon": _number(int, 1),
    "gamma": _number(float, 0.0, 1.0, lo_open=True),
    "n_min": _number(float, 1.0),
    "half_life_days": _number(float, 0.0, lo_open=True),
    "similarity": _choice("hour_dow", "hour", "any"),
    "w_loc": _number(float, 0.0, 1.0),
    "lookback_days": _number(float, 0.0, lo_open=True),
    "prior_profit": _number(float, 0.0),
    "supply_method": _choice("weighted", "regressor"),
    "lasting_min": _number(float, 0.0),
    "learning_min": _number(float, 0.0),
    "overflow_frac": _optional(_number(float, 0.0, 1.0), "off"),
    "max_iterations": _optional(_number(int, 1), "auto"),
    "anti_cycling": _choice("dantzig-bland", "bland"),
}

PATH_KEYS = ("history", "schedule", "campaigns", "output")


@dataclass(frozen=True)
class RunConfig:
    history: str | None = None
    schedule: str | None = None
    campaigns: str | None = None
    output: str = "plan.csv"
    epoch: datetime = DEFAULT_EPOCH
    frame_hours: float = 1.0
    frame: int = 1
    horizon: int = 24
    gamma: float = 0.95
    n_min: float = 50.0
    half_life_days: float = 7.0
    similarity: str = "hour_dow"
    w_loc: float = 0.5
    lookback_days: float = 28.0
    prior_profit: float = 0.0
    supply_method: str = "weighted"
    lasting_min: float = 0.0
    learning_min: float = 0.0
    overflow_frac: float | None = None
    max_iterations: int | None = None
    anti_cycling: str = "dantzig-bland"

    @property
    def frame_duration(self) -> timedelta:
        return timedelta(hours=self.frame_hours)

    def projection_params(self) -> ProjectionParams:
        return ProjectionParams(
            n_min=self.n_min, half_life=timedelta(days=self.half_life_days), similarity=self.similarity,
            w_loc=self.w_loc, lookback=timedelta(days=self.lookback_days), prior_profit=self.prior_profit,
        )

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            horizon=self.horizon, gamma=self.gamma, projection=self.projection_params(),
            solver=SolverSettings(max_iterations=self.max_iterations, anti_cycling=self.anti_cycling),
            lasting_min=self.lasting_min, overflow_frac=self.overflow_frac, learning_min=self.learning_min,
            supply_method=self.supply_method,
        )

    def check_paths(self, keys=("history", "schedule", "campaigns")):
        """Every input path must be set and exist."""
        for key in keys:
            value = getattr(self, key)
            if value is None:
                raise ParseError(f"no {key} file configured")
            if not Path(value).exists():
                raise ParseError(f"{key} file not found", path=value)


def parse_run_config(pairs: dict[str, tuple[str, int]], base_dir=None, path=None) -> RunConfig:
    values = {}
    for key, (text, line) in pairs.items():
        parse = RUN_KEYS.get(key)
        if parse is None:
            raise ParseError(f"unknown key {key!r}", path=path, line=line)
        try:
            v = parse(text)
        except ValueError as exc:
            raise ParseError(f"{key}: {exc}", path=path, line=line) from None
        if key in PATH_KEYS and base_dir is not None and not os.path.isabs(v):
            v = str(Path(base_dir) / v)
        values[key] = v
    return RunConfig(**values)


def load_run_config(path=None, overrides: dict | None = None, env=None) -> RunConfig:
    """Config from ``path`` (else ``$IMPALLOC_CONFIG``, else defaults) with ``overrides`` on top.

    ``overrides`` hold raw strings as typed on the command line; ``None``
    values are skipped.
    """
    env = os.environ if env is None else env
    path = path or env.get(ENV_VAR)
    cfg = RunConfig()
    if path:
        cfg = parse_run_config(read_key_values(path), Path(path).parent, str(path))
    extra = {k: (str(v), 0) for k, v in (overrides or {}).items() if v is not None}
    if extra:
        parsed = parse_run_config(extra)
        cfg = replace(cfg, **{k: getattr(parsed, k) for k in extra})
    return cfg


WORLD_KEYS = {
    "days": _number(int, 1),
    "warmup_days": _number(int, 0),
    "sigma": _number(float, 0.0),
    "observability": _number(float, 0.0, 1.0, lo_open=True),
    "arrivals": _choice("poisson", "deterministic"),
    "profit_drift": _number(float, -1.0),
    "supply_trend": _number(float, -1.0),
    "locations": _number(int, 1),
    "base_supply": _number(float, 0.0, lo_open=True),
    "seed": _number(int, 0),
}

_WORLD_ARGS = {"locations": "n_locations", "base_supply": "base", "sigma": "sigma", "days": "days",
               "warmup_days": "warmup_days", "observability": "observability", "arrivals": "arrivals",
               "profit_drift": "profit_drift", "supply_trend": "supply_trend", "seed": "seed"}


def world_config(path=None, overrides: dict | None = None):
    """Synthetic world described by a ``key = value`` file plus overrides."""
    from .simulator import synthetic_config

    pairs = read_key_values(path) if path else {}
    pairs.update({k: (str(v), 0) for k, v in (overrides or {}).items() if v is not None})
    kwargs = {}
    for key, (text, line) in pairs.items():
        parse = WORLD_KEYS.get(key)
        if parse is None:
            raise ParseError(f"unknown world key {key!r}", path=path, line=line)
        try:
            kwargs[_WORLD_ARGS[key]] = parse(text)
        except ValueError as exc:
            raise ParseError(f"{key}: {exc}", path=path, line=line) from None
    return synthetic_config(**kwargs)


def config_fields() -> list[str]:
    return [f.name for f in fields(RunConfig)]
