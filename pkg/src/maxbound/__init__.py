"""Sharp upper bounds on one-sided maximum exceedance probabilities.

Given a term structure of centered marginals that grows in convex order, this
package computes the least upper bound on P(max exceeds m) over all
martingales with those marginals, simulates an embedding that attains it, and
verifies the matching superhedging portfolios pathwise.
"""

from .marginals import (
    CallSurface,
    FamilyValidationError,
    GaussianFamily,
    MarginalFamily,
    ScaledUniformFamily,
    TabulatedFamily,
    ValidationReport,
    Violation,
    check_imrv,
    check_peacock,
    load_call_surface,
)
from .solver import (
    Boundary,
    CostCurve,
    CostResult,
    Payoff,
    SolverGrid,
    ZetaSurface,
    build_zeta_surface,
    dp_value_function,
    hardy_littlewood_C1,
    price_bound,
    psi,
    solve_C,
    solve_Cn,
)
from .simulate import (
    EmbeddingResult,
    PathRecord,
    ay_boundary,
    estimate_primal,
    iterated_ay_embed,
    marginal_ks,
    max_exceedance_prob,
    sample_brownian,
)
from .hedging import (
    dynamic_payout,
    gap_report,
    martingale_ineq_check,
    mixture_payout,
    pathwise_check,
    pathwise_rhs,
    remark_bound,
    static_cost,
    static_payout,
    verify_dual_routes,
    verify_pathwise,
    verify_superhedge,
)

__version__ = "0.1.0"

__all__ = [
    "Boundary",
    "CallSurface",
    "CostCurve",
    "CostResult",
    "EmbeddingResult",
    "FamilyValidationError",
    "GaussianFamily",
    "MarginalFamily",
    "Payoff",
    "PathRecord",
    "ScaledUniformFamily",
    "SolverGrid",
    "TabulatedFamily",
    "ValidationReport",
    "Violation",
    "ZetaSurface",
    "ay_boundary",
    "build_zeta_surface",
    "check_imrv",
    "check_peacock",
    "dp_value_function",
    "dynamic_payout",
    "estimate_primal",
    "gap_report",
    "hardy_littlewood_C1",
    "iterated_ay_embed",
    "load_call_surface",
    "marginal_ks",
    "martingale_ineq_check",
    "max_exceedance_prob",
    "mixture_payout",
    "pathwise_check",
    "pathwise_rhs",
    "price_bound",
    "psi",
    "remark_bound",
    "sample_brownian",
    "solve_C",
    "solve_Cn",
    "static_cost",
    "static_payout",
    "verify_dual_routes",
    "verify_pathwise",
    "verify_superhedge",
]
