"""Solver and checkers for discretized multidimensional screening problems."""

from .assumptions import AssumptionCheck, AssumptionReport, validate_assumptions
from .gconvex import (
    Allocation,
    GConvexityResult,
    ICResult,
    Menu,
    MenuItem,
    MonotonicityResult,
    UtilityProfile,
    g_envelope,
    g_subdifferential,
    is_g_convex,
    is_incentive_compatible,
    is_nondecreasing,
    menu_from_assignment,
    subdifferential_radius,
)
from .model import (
    AgentGrid,
    OutsideOption,
    PriceInterval,
    ProblemInstance,
    ProfitSpec,
    UtilitySpec,
    eval_g,
    eval_profit,
    invert_price_h,
    reservation_utility,
)
from .oracle import OracleConfig, solve_bruteforce
from .solver import (
    SolveConfig,
    SolveReport,
    aggregate_profit,
    best_response,
    solve,
    validate_allocation,
)

__version__ = "0.1.0"
