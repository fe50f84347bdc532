"""Safe caps for the lasting (mu) and learning (lambda) minima.

With ``M`` the largest admissible profit per impression:

* ``mu[i,k] <= min(D_i / (F_i * M),  min_t S[t,k] / N[k,t])`` where ``F_i`` is
  the number of frames in which campaign ``i`` is admissible and ``N[k,t]`` the
  number of campaigns admissible at location ``t`` in frame ``k``;
* ``lambda[q] <= min(D_i / (|C_i| * M),  S[l,k] / P[k,l])`` where ``|C_i|`` is the
  number of admissible quads of campaign ``i`` and ``P[k,l]`` the number of
  (campaign, creative) pairs admissible at the node.

Each cap alone keeps supply, budget and its own family jointly satisfiable.
Both caps at full size together do not: ``clamp_secondary`` halves them when
both families are active so that the sum of the two witnesses stays feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

from .errors import DomainError
from .grid import ANY, Configuration, Quad, project
from .model import Instance, build_revenue_lp, to_configuration
from .simplex import SolverSettings, find_feasible_point


def _budget_term(budget: float, count: int, cap: float) -> float:
    if math.isinf(budget):
        return math.inf
    if cap <= 0.0:
        # every admissible profit is 0: the budget row can never bind
        return math.inf
    return budget / (count * cap)


def mu_bound(instance: Instance, campaign: str, frame: int) -> float:
    C = instance.admissible
    if not C.by_campaign_frame(campaign, frame):
        raise DomainError(f"campaign {campaign!r} has no admissible point in frame {frame}")
    frames = project(C, [(1, campaign), (2, ANY), (4, ANY)])
    budget = _budget_term(instance.budget(campaign), len(frames), instance.profit_cap())
    supply = math.inf
    for (t,) in project(C, [(1, campaign), (2, ANY), (3, frame)]):
        campaigns_there = project(C, [(2, ANY), (3, frame), (4, t)])
        supply = min(supply, instance.supply[(t, frame)] / len(campaigns_there))
    return min(budget, supply)


def lambda_bound(instance: Instance, quad: Quad) -> float:
    C = instance.admissible
    quad = Quad(*quad)
    if quad not in C:
        raise DomainError(f"quad {tuple(quad)} is not admissible")
    n_campaign = len(project(C, [(1, quad.campaign)]))
    budget = _budget_term(instance.budget(quad.campaign), n_campaign, instance.profit_cap())
    n_pairs = len(project(C, [(3, quad.frame), (4, quad.location)]))
    return min(budget, instance.supply[quad.node] / n_pairs)


@dataclass(frozen=True)
class FeasibilityBounds:
    mu_max: Mapping[tuple[str, int], float]
    lambda_max: Mapping[Quad, float]
    profit_cap: float


def feasibility_bounds(instance: Instance) -> FeasibilityBounds:
    """All mu and lambda caps at once, from the admissible-set indexes.

    Agrees with :func:`mu_bound` / :func:`lambda_bound`; this route avoids the
    repeated set projections when every admissible point needs a cap.
    """
    C = instance.admissible
    M = instance.profit_cap()
    frames_of, campaigns_at, pairs_at = {}, {}, {}
    for q in C:
        frames_of.setdefault(q.campaign, set()).add(q.frame)
        campaigns_at.setdefault(q.node, set()).add(q.campaign)
        pairs_at[q.node] = pairs_at.get(q.node, 0) + 1
    node_share = {node: instance.supply[node] / len(cs) for node, cs in campaigns_at.items()}

    mu_max = {}
    for i in C.campaigns():
        budget = _budget_term(instance.budget(i), len(frames_of[i]), M)
        for k in sorted(frames_of[i]):
            locs = {q.location for q in C.by_campaign_frame(i, k)}
            mu_max[(i, k)] = min(budget, min(node_share[(t, k)] for t in locs))
    lam_max = {}
    for i in C.campaigns():
        quads = C.by_campaign(i)
        budget = _budget_term(instance.budget(i), len(quads), M)
        for q in quads:
            lam_max[q] = min(budget, instance.supply[q.node] / pairs_at[q.node])
    return FeasibilityBounds(mu_max, lam_max, M)


def clamp_secondary(instance: Instance, joint_safe: bool = True) -> Instance:
    """Copy of ``instance`` with mu and lambda capped element-wise by their bounds.

    With ``joint_safe`` and both the lasting and learning families active,
    each cap is halved; otherwise the full caps are used.
    """
    bounds = feasibility_bounds(instance)
    factor = 1.0
    if joint_safe and instance.lasting and instance.learning and any(v > 0 for v in instance.lam.values()):
        factor = 0.5
    mu = {
        key: min(v, factor * bounds.mu_max[key])
        for key, v in instance.mu.items() if key in bounds.mu_max
    }
    lam = {
        q: min(v, factor * bounds.lambda_max[q])
        for q, v in instance.lam.items() if q in bounds.lambda_max
    }
    return replace(instance, mu=mu, lam=lam)


@dataclass
class FeasibilityVerdict:
    feasible: bool
    witness: Configuration | None
    phase1_iterations: int = 0

    def __bool__(self):
        return self.feasible


def check_feasible(instance: Instance, settings: SolverSettings | None = None) -> FeasibilityVerdict:
    """Run phase 1 on every enabled constraint family of ``instance``."""
    problem = build_revenue_lp(instance)
    sol = find_feasible_point(problem, settings)
    if sol.status != "optimal":
        return FeasibilityVerdict(False, None, sol.iterations)
    return FeasibilityVerdict(True, to_configuration(problem, sol.values, instance.admissible), sol.iterations)
