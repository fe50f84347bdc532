"""Impression allocation for digital billboards.

Projects per-slot profit and traffic from a delivery log, solves a revenue
linear program over a rolling horizon and emits per-frame delivery
probabilities.
"""

from .engine import DeliveryPlan, EngineConfig, EngineState, advance, apply_horizon, plan_cycle, to_probabilities
from .errors import (
    ContractViolation,
    DomainError,
    ImpallocError,
    InfeasibleError,
    IterationLimitError,
    ModelError,
    ParseError,
)
from .feasibility import check_feasible, clamp_secondary, feasibility_bounds, lambda_bound, mu_bound
from .grid import ANY, AdmissibleSet, Catalog, Configuration, Quad, full_grid, project, validate_catalog
from .history import HistoryLog, HistoryRecord
from .model import (
    Instance,
    LpProblem,
    TransportationInstance,
    build_lexicographic,
    build_min_impressions_lp,
    build_revenue_lp,
)
from .projection import (
    FeatureSpec,
    ProjectionParams,
    fit_supply_regressor,
    predict_supply,
    project_profit,
    project_supply_weighted,
)
from .simplex import LpSolution, SolverSettings, find_feasible_point, solve_simplex
from .transport import solve_transportation

__version__ = "0.1.0"
