"""Parameters, jump measures, admissibility and the integration engine."""
from .expr import Expr, ExprError, parse
from .integration import (Growth, IntegralResult, IntegrationError, Plan, classify_moment,
                          measure_integral, moment_integrand)
from .measures import (ZERO, Density, FiniteAtomic, JumpMeasure, SeriesAtomic, density,
                       finite_atoms, series, truncation_h)
from .params import AffineParams, Violation, is_admissible, validate_admissibility
from .verdict import Evidence, Outcome, Verdict, all_of, fails, holds, inconclusive

__all__ = [
    "Expr", "ExprError", "parse",
    "Growth", "IntegralResult", "IntegrationError", "Plan", "classify_moment",
    "measure_integral", "moment_integrand",
    "ZERO", "Density", "FiniteAtomic", "JumpMeasure", "SeriesAtomic", "density",
    "finite_atoms", "series", "truncation_h",
    "AffineParams", "Violation", "is_admissible", "validate_admissibility",
    "Evidence", "Outcome", "Verdict", "all_of", "fails", "holds", "inconclusive",
]
