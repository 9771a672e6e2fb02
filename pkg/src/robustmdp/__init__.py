"""Finite-horizon distributionally robust decision problems.

Worst-case-optimal policies for a controller playing against an adversarial
choice of disturbance law, with ambiguity-set reductions via stochastic
orders and spectral risk measures, minimax diagnostics, and application
builders for robust linear-quadratic control and wind/storage bidding.
"""

from .ambiguity import (
    MAX,
    MIN,
    AmbiguitySet,
    convex_combinations,
    convex_order_leq,
    find_cx_maximal,
    find_st_extreme,
    sup_over_set,
    usual_order_leq,
)
from .bounds import BoundingData, check_bounding, check_envelope
from .distributions import Density, DiscreteDistribution
from .game import (
    StaticGame,
    build_counterexample,
    gap,
    lower_value,
    mixing_value,
    saddle_search,
    upper_value,
)
from .model import (
    ActionSet,
    ConvexFlags,
    FiniteDisturbance,
    FiniteRobustMDP,
    MonotoneFlags,
    Stage,
    StageDynamics,
    StateGrid,
    Violation,
    induced_distribution,
    project_to_grid,
    spot_check_flags,
    validate,
)
from .risk import (
    Spectrum,
    TransformedSample,
    comonotone_density,
    distributional_transform,
    dual_value,
    expand_spectrum_to_generators,
    expected_shortfall_spectrum,
    quantile_lower,
    quantile_upper,
    solve_risk_form,
    spectral_rho,
    spectrum_from_density,
)
from .solver import (
    DECREASING,
    INCREASING,
    EnumerationCapError,
    ModelValidationError,
    SolveResult,
    check_value_monotone,
    evaluate_pair,
    evaluate_robust_policy,
    operator_L,
    oracle_history_value,
    oracle_min_max,
    solve_nature_first,
    solve_robust,
)

__version__ = "0.1.0"
