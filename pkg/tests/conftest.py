import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from impalloc.grid import AdmissibleSet, Catalog, Quad  # noqa: E402
from impalloc.model import Instance  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def t1_catalog():
    return Catalog({"1": "campaign 1", "2": "campaign 2"}, {"1": ("1",), "2": ("1",)}, ("L1",), 2)


def t1_instance(**kw):
    quads = [Quad(i, "1", k, "L1") for i in ("1", "2") for k in (1, 2)]
    profit = {q: 1.0 if q.campaign == "1" else 0.5 for q in quads}
    base = dict(
        admissible=AdmissibleSet(quads),
        supply={("L1", 1): 5.0, ("L1", 2): 5.0},
        demand={"1": 10.0, "2": math.inf},
        profit=profit,
    )
    base.update(kw)
    return Instance(**base)


@pytest.fixture
def t1():
    return t1_instance()


@pytest.fixture
def catalog_t1():
    return t1_catalog()


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(n: int, ok: bool, detail: str):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
