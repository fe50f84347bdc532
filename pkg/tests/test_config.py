from datetime import timedelta
from pathlib import Path

import pytest

from conftest import FIXTURES
from impalloc import config as cfgmod
from impalloc.errors import ParseError


def write(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text, encoding="utf-8")
    return p


def test_t1_config_resolves_paths():
    cfg = cfgmod.load_run_config(FIXTURES / "t1" / "config.txt", env={})
    assert Path(cfg.history) == FIXTURES / "t1" / "history.csv"
    assert cfg.horizon == 2 and cfg.gamma == 1.0 and cfg.n_min == 1.0
    cfg.check_paths()


def test_defaults_without_file():
    cfg = cfgmod.load_run_config(env={})
    assert cfg.horizon == 24 and cfg.gamma == 0.95 and cfg.overflow_frac is None
    assert cfg.frame_duration == timedelta(hours=1)
    with pytest.raises(ParseError):
        cfg.check_paths()


def test_environment_variable_names_the_file(tmp_path):
    p = write(tmp_path, "horizon = 6\n")
    assert cfgmod.load_run_config(env={cfgmod.ENV_VAR: str(p)}).horizon == 6


def test_overrides_win(tmp_path):
    p = write(tmp_path, "horizon = 6\ngamma = 0.5\n")
    cfg = cfgmod.load_run_config(p, {"horizon": "3", "gamma": None}, env={})
    assert cfg.horizon == 3 and cfg.gamma == 0.5


def test_engine_config_carries_every_knob(tmp_path):
    p = write(tmp_path, "overflow_frac = 0.4\nmax_iterations = 99\nanti_cycling = bland\n"
                        "half_life_days = 2\nsupply_method = regressor\nlearning_min = 3\n")
    eng = cfgmod.load_run_config(p, env={}).engine_config()
    assert eng.overflow_frac == 0.4 and eng.learning_min == 3.0 and eng.supply_method == "regressor"
    assert eng.solver.max_iterations == 99 and eng.solver.anti_cycling == "bland"
    assert eng.projection.half_life == timedelta(days=2)


@pytest.mark.parametrize("text,line", [
    ("horizon = 0\n", 1),
    ("# comment\n\ngamma = 1.5\n", 3),
    ("gamma = 0\n", 1),
    ("similarity = weekly\n", 1),
    ("nonsense\n", 1),
    ("horizon = 2\nhorizon = 3\n", 2),
    ("colour = red\n", 1),
    ("n_min = nan\n", 1),
    ("epoch = 2010-04-01T00:00:00\n", 1),
])
def test_bad_values_are_reported_with_lines(tmp_path, text, line):
    p = write(tmp_path, text)
    with pytest.raises(ParseError) as exc:
        cfgmod.load_run_config(p, env={})
    assert exc.value.line == line


def test_world_config_keys(tmp_path):
    p = tmp_path / "world.cfg"
    p.write_text("days = 2\nlocations = 3\nsigma = 0.2\n")
    w = cfgmod.world_config(p, {"seed": "9"})
    assert w.catalog.n_frames == 48 and len(w.base_supply) == 3
    assert w.noise_sigma == 0.2 and w.seed == 9
    with pytest.raises(ParseError):
        cfgmod.world_config(None, {"planets": "3"})
    with pytest.raises(ParseError):
        cfgmod.world_config(None, {"observability": "0"})


def test_every_run_key_is_documented():
    doc = cfgmod.__doc__
    for key in cfgmod.RUN_KEYS:
        assert f"\n{key} " in doc
    assert set(cfgmod.RUN_KEYS) == set(cfgmod.config_fields())
