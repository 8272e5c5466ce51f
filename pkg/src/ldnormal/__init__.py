"""Discrete approximation of locally dependent integer sums.

Matches three factorial cumulants to a binomial, negative binomial or
triple-Poisson convolution, measures distances between integer laws, and
reproduces the four counting applications (hypercube sinks, birthday
coincidences, monochromatic edges, random-graph triangles).
"""

__version__ = "0.1.0"

from .cumulants import FamilyChoice, cumulants_from_moments, match_family, select_family, solve_family
from .distributions import IntegerPMF, build_discretized_normal, build_family, closed_form_cumulants, numeric_cumulants
from .errors import (
    AccuracyError,
    BudgetError,
    InfeasibleFamilyError,
    NumericalError,
    ParameterError,
    PreconditionError,
)
from .metrics import distance_report, dtv_empirical, empirical_pmf, local_distance, second_difference_norm, total_variation
from .params import BinPoisParams, CumulantTriple, MomentTriple, NegBinPoisParams, NormalParams, TriplePoisParams

__all__ = [
    "AccuracyError", "BinPoisParams", "BudgetError", "CumulantTriple", "FamilyChoice", "InfeasibleFamilyError",
    "IntegerPMF", "MomentTriple", "NegBinPoisParams", "NormalParams", "NumericalError", "ParameterError",
    "PreconditionError", "TriplePoisParams", "build_discretized_normal", "build_family", "closed_form_cumulants",
    "cumulants_from_moments", "distance_report", "dtv_empirical", "empirical_pmf", "local_distance", "match_family",
    "numeric_cumulants", "second_difference_norm", "select_family", "solve_family", "total_variation",
]  # fmt: skip
