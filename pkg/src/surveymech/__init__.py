"""Cost-variance optimal posted-price mechanisms for paid surveys."""

from .errors import SurveyError
from .functionals import certificate, expected_cost, vstar
from .offer import OfferDistribution, build_offer_distribution
from .optimizer import Design, solve_budget, solve_convex, solve_variable_n, solve_variance
from .prior import PriorSpec

__all__ = [
    "Design",
    "OfferDistribution",
    "PriorSpec",
    "SurveyError",
    "build_offer_distribution",
    "certificate",
    "expected_cost",
    "solve_budget",
    "solve_convex",
    "solve_variable_n",
    "solve_variance",
    "vstar",
]

__version__ = "0.1.0"
