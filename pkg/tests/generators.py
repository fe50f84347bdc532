"""Seeded random problem generators shared by the tests."""

import math
from fractions import Fraction

import numpy as np

from impalloc.grid import AdmissibleSet, Quad
from impalloc.model import Instance, TransportationInstance


def random_instance(rng, max_campaigns=4, max_creatives=3, max_locations=4, max_frames=6,
                    finite_budget=0.7) -> Instance:
    """Random allocation instance: density in [0.2, 1], positive supplies and profits."""
    n_camp = int(rng.integers(1, max_campaigns + 1))
    locs = [f"L{l}" for l in range(int(rng.integers(1, max_locations + 1)))]
    n_frames = int(rng.integers(1, max_frames + 1))
    density = rng.uniform(0.2, 1.0)
    pts = []
    for i in range(n_camp):
        for j in range(int(rng.integers(1, max_creatives + 1))):
            for k in range(1, n_frames + 1):
                for l in locs:
                    if rng.random() < density:
                        pts.append(Quad(f"c{i}", f"b{j}", k, l))
    if not pts:
        pts = [Quad("c0", "b0", 1, locs[0])]
    C = AdmissibleSet(pts)
    supply = {node: float(rng.uniform(1, 100)) for node in C.nodes()}
    demand = {i: (float(rng.uniform(0.5, 50)) if rng.random() < finite_budget else math.inf) for i in C.campaigns()}
    profit = {q: float(rng.uniform(0.001, 2)) for q in C}
    return Instance(C, supply, demand, profit)


def random_lp(rng, max_vars=8, max_rows=8):
    """Bounded random LP: a positive ``<=`` budget row always caps every variable."""
    n = int(rng.integers(1, max_vars + 1))
    m = int(rng.integers(1, max_rows + 1))
    A, senses, b = [], [], []
    A.append(rng.uniform(0.1, 1.0, n))
    senses.append("<=")
    b.append(rng.uniform(1, 10))
    for _ in range(m - 1):
        kind = rng.choice(["<=", "<=", ">=", "="], p=[0.45, 0.2, 0.25, 0.1])
        row = rng.uniform(-1, 1, n).round(3)
        if kind == ">=":
            A.append(np.abs(row))
            b.append(rng.uniform(0, 2))
        elif kind == "=":
            A.append(np.abs(row) + 0.05)
            b.append(rng.uniform(0.5, 3))
        else:
            A.append(row)
            b.append(rng.uniform(-1, 10))
        senses.append(str(kind))
    c = rng.uniform(-1, 2, n).round(3)
    return np.array(A), tuple(senses), np.array(b), c, bool(rng.random() < 0.7)


def random_transportation(rng, max_side=6, integer=False) -> TransportationInstance:
    m = int(rng.integers(1, max_side + 1))
    n = int(rng.integers(1, max_side + 1))
    if integer:
        s = rng.integers(0, 20, m).astype(float)
        total = s.sum()
        cuts = np.sort(rng.integers(0, int(total) + 1, n - 1)) if n > 1 else np.array([], dtype=int)
        d = np.diff(np.concatenate([[0], cuts, [total]])).astype(float)
    else:
        s = rng.uniform(0, 10, m)
        w = rng.uniform(0.1, 1, n)
        d = w / w.sum() * s.sum()
        d[-1] = s.sum() - d[:-1].sum()
    costs = rng.uniform(0, 10, (m, n)).round(2)
    return TransportationInstance(tuple(s), tuple(d), tuple(map(tuple, costs)), bool(rng.random() < 0.3))


def decimal_instance(rng, max_frames=60):
    """Instance whose supplies and mu values are multiples of 1/2 (exact in binary)."""
    inst = random_instance(rng, max_frames=max_frames)
    supply = {node: float(Fraction(int(rng.integers(0, 400)), 2)) for node in inst.supply}
    mu = {}
    for i in inst.admissible.campaigns():
        for k in {q.frame for q in inst.admissible.by_campaign(i)}:
            mu[(i, k)] = float(Fraction(int(rng.integers(0, 20)), 2))
    return Instance(inst.admissible, supply, inst.demand, inst.profit, mu=mu, lasting=True)
