import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import t1_instance
from generators import random_instance
from impalloc.errors import InfeasibleError, ModelError
from impalloc.grid import AdmissibleSet, Quad
from impalloc.model import (
    GE,
    LE,
    Instance,
    TransportationInstance,
    balance,
    build_lexicographic,
    build_min_impressions_lp,
    build_revenue_lp,
    check_configuration,
    to_configuration,
)
from impalloc.simplex import solve_simplex
from oracles import enumerate_vertices


def test_t1_revenue_lp_shape(t1):
    lp = build_revenue_lp(t1)
    assert lp.n == 4
    kinds = [label[0] for label in lp.row_labels]
    assert kinds.count("supply") == 2 and kinds.count("demand") == 1
    assert list(lp.c) == [1.0, 1.0, 0.5, 0.5]
    assert lp.maximize
    assert set(lp.variables) == set(t1.admissible)


def test_t1_overflow_rows():
    inst = t1_instance(overflow=True, overflow_frac={("L1", 1): 0.9, ("L1", 2): 0.9})
    lp = build_revenue_lp(inst)
    rows = [r for r, lab in enumerate(lp.row_labels) if lab[0] == "overflow"]
    assert len(rows) == 4
    assert np.allclose(lp.b[rows], 4.5)
    assert all(lp.senses[r] == LE for r in rows)


def test_no_overflow_row_at_single_creative_node():
    quads = [Quad("a", "1", 1, "L1"), Quad("b", "1", 1, "L1"), Quad("a", "1", 1, "L2")]
    inst = Instance(AdmissibleSet(quads), {("L1", 1): 5.0, ("L2", 1): 5.0}, {"a": math.inf, "b": math.inf},
                    {q: 1.0 for q in quads}, overflow=True, overflow_frac={("L1", 1): 0.5, ("L2", 1): 0.5})
    lp = build_revenue_lp(inst)
    over = [lab for lab in lp.row_labels if lab[0] == "overflow"]
    assert {lab[1].location for lab in over} == {"L1"}


def test_lasting_and_learning_rows(t1):
    inst = t1_instance(mu={("1", 1): 1.0, ("1", 2): 1.0, ("2", 1): 0.5, ("2", 2): 0.5}, lasting=True,
                       lam={Quad("2", "1", 2, "L1"): 2.0}, learning=True)
    lp = build_revenue_lp(inst)
    kinds = [lab[0] for lab in lp.row_labels]
    assert kinds.count("lasting") == 4 and kinds.count("learning") == 1
    assert all(lp.senses[r] == GE for r, k in enumerate(kinds) if k in ("lasting", "learning"))
    sol = solve_simplex(lp)
    x = to_configuration(lp, sol.values, inst.admissible)
    assert check_configuration(inst, x) == []
    assert x[Quad("2", "1", 2, "L1")] >= 2.0 - 1e-9


def test_missing_profit_names_the_quad(t1):
    profit = dict(t1.profit)
    del profit[Quad("2", "1", 2, "L1")]
    with pytest.raises(ModelError, match="'2', '1', 2, 'L1'"):
        build_revenue_lp(t1_instance(profit=profit))
    with pytest.raises(ModelError, match="supply"):
        build_revenue_lp(t1_instance(supply={("L1", 1): 5.0}))


def test_min_impressions_examples(t1):
    lp = build_min_impressions_lp(t1, {"1": 10.0, "2": 0.0})
    sol = solve_simplex(lp)
    assert sol.optimal and sol.objective == pytest.approx(10.0)
    ref, _ = enumerate_vertices(lp.A, lp.senses, lp.b, lp.c, maximize=False)
    assert ref == pytest.approx(10.0)
    zero = solve_simplex(build_min_impressions_lp(t1, {"1": 0.0, "2": 0.0}))
    assert zero.objective == pytest.approx(0.0) and np.allclose(zero.values, 0.0)
    assert solve_simplex(build_min_impressions_lp(t1, {"1": 11.0})).status == "infeasible"
    with pytest.raises(ModelError):
        build_min_impressions_lp(t1, {"9": 1.0})


def test_lexicographic_examples(t1):
    lex = build_lexicographic(t1)
    assert lex.best_revenue == pytest.approx(10.0)
    stage2 = solve_simplex(lex.stage2)
    assert stage2.objective == pytest.approx(10.0, abs=1e-6)
    zero = build_lexicographic(t1_instance(profit={q: 0.0 for q in t1.admissible}))
    assert solve_simplex(zero.stage2).objective == pytest.approx(0.0)
    with pytest.raises(InfeasibleError):
        build_lexicographic(t1_instance(mu={("1", 1): 1000.0}, lasting=True))


def test_balance_examples():
    same = TransportationInstance((3, 2), (2, 3), ((1, 2), (3, 1)))
    assert balance(same) is same
    more_demand = balance(TransportationInstance((3, 2), (2, 5), ((1, 2), (3, 1))))
    assert more_demand.supplies == (3.0, 2.0, 2.0) and more_demand.values[-1] == (0.0, 0.0)
    more_supply = balance(TransportationInstance((7,), (2, 3), ((1, 2),)))
    assert more_supply.demands == (2.0, 3.0, 2.0) and more_supply.values == ((1.0, 2.0, 0.0),)
    assert more_demand.balanced and more_supply.balanced


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_lp_variables_round_trip_and_solutions_pass_checker(seed):
    inst = random_instance(np.random.default_rng(seed), max_frames=3)
    lp = build_revenue_lp(inst)
    assert lp.n == len(inst.admissible)
    assert list(lp.variables) == list(inst.admissible.ordered())
    sol = solve_simplex(lp)
    assert sol.optimal
    assert check_configuration(inst, to_configuration(lp, sol.values, inst.admissible)) == []


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_disabling_a_family_never_lowers_the_optimum(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, max_frames=3)
    mu = {(q.campaign, q.frame): float(rng.uniform(0, 2)) for q in inst.admissible}
    full = Instance(inst.admissible, inst.supply, inst.demand, inst.profit, mu=mu, lasting=True,
                    overflow=True, overflow_frac={n: 0.6 for n in inst.supply})
    best = solve_simplex(build_revenue_lp(full))
    for flags in ({"lasting": False}, {"overflow": False}):
        relaxed = solve_simplex(build_revenue_lp(full.with_flags(**flags)))
        if best.optimal:
            assert relaxed.optimal
            assert relaxed.objective >= best.objective - 1e-7 * max(1.0, abs(best.objective))


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_balance_preserves_the_optimum(seed):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    s = rng.uniform(0, 10, m)
    d = rng.uniform(0, 10, n)
    costs = rng.uniform(0, 5, (m, n))
    t = TransportationInstance(tuple(s), tuple(d), tuple(map(tuple, costs)))
    bal = balance(t)
    assert bal.balanced
    # original problem: ship min(total supply, total demand) units; rows/cols of real nodes only
    A, senses, b = [], [], []
    for i in range(m):
        A.append([1.0 if r == i else 0.0 for r in range(m) for _ in range(n)])
        senses.append("<=" if s.sum() >= d.sum() else "=")
        b.append(s[i])
    for j in range(n):
        A.append([1.0 if c == j else 0.0 for _ in range(m) for c in range(n)])
        senses.append("<=" if d.sum() >= s.sum() else "=")
        b.append(d[j])
    A.append([1.0] * (m * n))
    senses.append("=")
    b.append(min(s.sum(), d.sum()))
    ref, _ = enumerate_vertices(np.array(A), senses, np.array(b), costs.ravel(), maximize=False)
    got = solve_simplex(bal.to_lp())
    assert got.objective == pytest.approx(ref, rel=1e-7, abs=1e-7)
