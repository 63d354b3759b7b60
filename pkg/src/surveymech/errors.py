"""Exception hierarchy shared by all modules."""


class SurveyError(Exception):
    """Base class for every error raised by the package."""


class NonFiniteDerivative(SurveyError):
    """Density slope requested exactly at a piecewise-polynomial breakpoint."""


class GridTooCoarse(SurveyError):
    pass


class QuadratureFailure(SurveyError):
    pass


class DegenerateDenominator(SurveyError):
    pass


class DegenerateMechanism(SurveyError):
    """The offer family has saturated: no valid distribution for this scale."""


class NoConvergence(SurveyError):
    pass


class InfiniteVariance(SurveyError):
    pass


class Infeasible(SurveyError):
    """Constraint cannot be met by any member of the optimal family.

    ``achievable`` carries the (low, high) range of the constrained quantity.
    """

    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable


class InfeasibleBudget(Infeasible):
    pass


class InfeasibleVariance(Infeasible):
    pass


class NoCrossing(SurveyError):
    pass


class NoFiniteOptimum(SurveyError):
    pass


class InvalidObjective(SurveyError, ValueError):
    pass


class NotMonotone(SurveyError):
    pass


class ZeroSurvivalWeight(SurveyError):
    pass


class NotConverged(SurveyError):
    pass


class TooManyOutcomes(SurveyError):
    pass


class ConfigError(SurveyError):
    pass
