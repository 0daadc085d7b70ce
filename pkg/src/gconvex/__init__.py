"""Numerical lab for g-expectations and the generalized Jensen inequality.

Drivers g(t, y, z) are written in a small expression DSL, g-expectations are
computed by a finite-difference PDE solver cross-checked by least-squares
Monte Carlo, and g-convexity/-concavity/-affinity of candidates h is decided
by scanning the pointwise operator

    L_g h = 1/2 h''(y)|z|^2 + g(t, h(y), h'(y) z) - h'(y) g(t, y, z).
"""

from .characterization import (
    CharacterizationReport,
    jensen_all_convex_predictor,
    periodicity_test,
    self_financing_test,
    super_homogeneity_test,
    translation_invariance_test,
    zero_interest_test,
)
from .convexity import (
    AffinePair,
    ConvexityVerdict,
    ScanGrid,
    check_composition,
    check_nonsmooth,
    check_shape,
    combine_sup,
    g_convex_envelope,
    l_g_operator,
    pi_a_membership,
    pi_v_membership,
    slope_bound_check,
    special_case_z_independent,
)
from .functions import (
    ComposedFunction,
    ScalarFunction,
    SymbolicFunction,
    TabulatedFunction,
    as_scalar_function,
    compose,
    identity,
)
from .generators import (
    GeneratorExpr,
    GeneratorSpec,
    ValidationDomain,
    classify_generator,
    estimate_lipschitz,
    eval_generator,
    parse_generator,
)
from .jensen import (
    JensenReport,
    ProcessSurface,
    Scenario,
    axiom_suite,
    classify_process,
    martingale_transform_suite,
    stability_suite,
    verify_jensen,
    viability_check,
    witness_scenario,
)
from .mc import McResult, solve_mc
from .pde import (
    PayoffSpec,
    SolveResult,
    SolverConfig,
    SpaceGrid,
    TimeGrid,
    conditional_g_expectation_path,
    g_expectation,
    solve_pde,
    solve_terminal_values,
    truncate_payoff,
)

__version__ = "0.1.0"

__all__ = [
    "AffinePair",
    "CharacterizationReport",
    "ComposedFunction",
    "ConvexityVerdict",
    "GeneratorExpr",
    "GeneratorSpec",
    "JensenReport",
    "McResult",
    "PayoffSpec",
    "ProcessSurface",
    "ScalarFunction",
    "ScanGrid",
    "Scenario",
    "SolveResult",
    "SolverConfig",
    "SpaceGrid",
    "SymbolicFunction",
    "TabulatedFunction",
    "TimeGrid",
    "ValidationDomain",
    "as_scalar_function",
    "axiom_suite",
    "check_composition",
    "check_nonsmooth",
    "check_shape",
    "classify_generator",
    "classify_process",
    "combine_sup",
    "compose",
    "conditional_g_expectation_path",
    "estimate_lipschitz",
    "eval_generator",
    "g_convex_envelope",
    "g_expectation",
    "identity",
    "jensen_all_convex_predictor",
    "l_g_operator",
    "martingale_transform_suite",
    "parse_generator",
    "periodicity_test",
    "pi_a_membership",
    "pi_v_membership",
    "self_financing_test",
    "slope_bound_check",
    "solve_mc",
    "solve_pde",
    "solve_terminal_values",
    "special_case_z_independent",
    "stability_suite",
    "super_homogeneity_test",
    "translation_invariance_test",
    "truncate_payoff",
    "verify_jensen",
    "viability_check",
    "witness_scenario",
    "zero_interest_test",
    "__version__",
]
