"""Scalar searches over the optimal family for the four survey design problems."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateMechanism,
    InfeasibleBudget,
    InfeasibleVariance,
    InvalidObjective,
    NoCrossing,
    NoFiniteOptimum,
)
from .functionals import certificate, expected_cost, vstar
from .offer import _check_G, build_offer_distribution, iron
from .prior import find_irregular_intervals

log = logging.getLogger(__name__)

ALPHA_MIN = 1e-9
ALPHA_MAX = 1e9
MAX_ITER = 200


# ----------------------------------------------------------------- problems
@dataclass(frozen=True)
class MinVarianceGivenBudget:
    n: int
    budget: float

    def __post_init__(self):
        _check_n(self.n)
        if not self.budget > 0:
            raise ValueError("budget must be positive")


@dataclass(frozen=True)
class MinCostGivenVariance:
    n: int
    vmax: float

    def __post_init__(self):
        _check_n(self.n)
        if not self.vmax > 0:
            raise ValueError("variance bound must be positive")


@dataclass(frozen=True)
class ConvexObjective:
    """phi(c, v) with partial derivatives d_cost and d_var."""

    n: int
    phi: object

    def __post_init__(self):
        _check_n(self.n)


@dataclass(frozen=True)
class VariableN:
    beta: float
    budget: float | None = None
    vmax: float | None = None

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("recruit cost must be nonnegative")
        if (self.budget is None) == (self.vmax is None):
            raise ValueError("give exactly one of budget or vmax")
        bound = self.budget if self.budget is not None else self.vmax
        if not bound > 0:
            raise ValueError("constraint bound must be positive")


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")


class Objective:
    """Convex objective phi(cost, vstar) given as three callables."""

    def __init__(self, value, d_cost, d_var, name="custom"):
        self.value, self.d_cost, self.d_var, self.name = value, d_cost, d_var, name

    @classmethod
    def linear(cls, weight):
        """cost + weight * vstar."""
        return cls(lambda c, v: c + weight * v, lambda c, v: 1.0, lambda c, v: weight, f"linear({weight})")

    @classmethod
    def quadratic(cls, wc=1.0, wv=1.0):
        """wc c^2 + wv v^2."""
        return cls(
            lambda c, v: wc * c * c + wv * v * v,
            lambda c, v: 2 * wc * c,
            lambda c, v: 2 * wv * v,
            f"quadratic({wc},{wv})",
        )


# ------------------------------------------------------------------- design
@dataclass
class Design:
    dist: object
    alpha: float
    n: int
    lam: float
    cost: float
    vstar: float
    certificate: object
    beta: float = 0.0
    problem: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self):
        return {
            "alpha": self.alpha,
            "n": self.n,
            "lambda": self.lam,
            "beta": self.beta,
            "achieved_cost": self.cost,
            "achieved_vstar": self.vstar,
            "problem": self.problem,
            "notes": list(self.notes),
            "certificate": self.certificate.to_json(),
            "prior": self.dist.prior.to_json(),
            "offer_distribution": self.dist.to_json(),
        }


class Family:
    """Memoised cost and vstar of the optimal law as functions of alpha (n = 1)."""

    def __init__(self, prior):
        self.prior = prior
        self._cache = {}
        self.alpha_max = saturation_alpha(prior)

    def dist(self, alpha):
        return build_offer_distribution(self.prior, alpha)

    def unit(self, alpha):
        """(per-capita cost, vstar at n = 1)."""
        hit = self._cache.get(alpha)
        if hit is None:
            d = self.dist(alpha)
            hit = (expected_cost(self.prior, d, 1).value, vstar(self.prior, d, 1).value)
            self._cache[alpha] = hit
        return hit


def saturation_alpha(prior, iters=MAX_ITER):
    """Largest alpha (capped at ALPHA_MAX) that yields a valid offer law.

    For a bounded prior, past this point the truncation point would sit at
    the support top; at it the law is a point mass at the top.
    """
    if not prior.bounded:
        return ALPHA_MAX

    def ok(a):
        try:
            build_offer_distribution(prior, a)
        except DegenerateMechanism:
            return False
        return True

    if ok(ALPHA_MAX):
        return ALPHA_MAX
    lo, hi = math.log(ALPHA_MIN), math.log(ALPHA_MAX)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(math.exp(mid)):
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return math.exp(lo)


def _log_bisect(g, lo, hi, rtol=0.0, iters=MAX_ITER):
    """Root of increasing g on [lo, hi] by bisection in log alpha.

    Stops when |g| <= rtol (if given) or the bracket collapses.
    """
    a, b = math.log(lo), math.log(hi)
    best = None
    for _ in range(iters):
        m = 0.5 * (a + b)
        val = g(math.exp(m))
        if best is None or abs(val) < abs(best[1]):
            best = (math.exp(m), val)
        if val == 0 or abs(val) <= rtol:
            return math.exp(m)
        if val < 0:
            a = m
        else:
            b = m
        if b - a < 1e-15:
            break
    return best[0]


def _design(fam, alpha, n, beta=0.0, problem=None, notes=()):
    prior = fam.prior
    d = fam.dist(alpha)
    cost = expected_cost(prior, d, n, beta).value
    var = vstar(prior, d, n).value
    cert = certificate(prior, d, n)
    if not cert.passed:
        log.warning("certificate failed at alpha=%g: deviation %g", alpha, cert.max_flatness_deviation)
    return Design(d, alpha, int(n), alpha * n * n, cost, var, cert, beta, dict(problem or {}), list(notes))


# ------------------------------------------------------------------ solvers
def solve_budget(prior, n, budget, beta=0.0, family=None):
    """Minimise vstar subject to expected cost (including n*beta) equal to ``budget``."""
    MinVarianceGivenBudget(n, budget)
    fam = family or Family(prior)
    hi = fam.alpha_max
    target = budget / n - beta
    c_lo, c_hi = fam.unit(ALPHA_MIN)[0], fam.unit(hi)[0]
    span = (n * (c_lo + beta), n * (c_hi + beta))
    if target < c_lo:
        raise InfeasibleBudget(f"budget {budget} is below the cheapest design cost {span[0]}", span)
    if target > c_hi * (1 + 1e-9):
        raise InfeasibleBudget(f"budget {budget} exceeds the most a design can spend ({span[1]})", span)
    if target >= c_hi:
        alpha = hi
    else:
        alpha = _log_bisect(lambda a: fam.unit(a)[0] / target - 1.0, ALPHA_MIN, hi, rtol=1e-9)
    problem = {"variant": "budget", "n": n, "budget": budget, "beta": beta}
    return _design(fam, alpha, n, beta, problem)


def solve_variance(prior, n, vmax, beta=0.0, family=None):
    """Minimise expected cost subject to vstar equal to ``vmax``."""
    MinCostGivenVariance(n, vmax)
    fam = family or Family(prior)
    hi = fam.alpha_max
    target = vmax * n
    v_lo, v_hi = fam.unit(ALPHA_MIN)[1], fam.unit(hi)[1]
    span = (v_hi / n, v_lo / n)
    if target < v_hi * (1 - 1e-9):
        raise InfeasibleVariance(f"variance bound {vmax} is below the smallest achievable {span[0]}", span)
    if target > v_lo:
        raise InfeasibleVariance(f"variance bound {vmax} is looser than any design needs ({span[1]})", span)
    if target <= v_hi:
        alpha = hi
    else:
        alpha = _log_bisect(lambda a: 1.0 - fam.unit(a)[1] / target, ALPHA_MIN, hi, rtol=1e-9)
    problem = {"variant": "variance", "n": n, "vmax": vmax, "beta": beta}
    return _design(fam, alpha, n, beta, problem)


def check_objective(phi, cost_range, var_range, points=5):
    """Spot-check monotonicity and midpoint convexity of phi on a small grid."""
    cs = np.linspace(*cost_range, points)
    vs = np.linspace(*var_range, points)
    for c in cs:
        for v in vs:
            dc, dv = phi.d_cost(c, v), phi.d_var(c, v)
            if not (np.isfinite(dc) and np.isfinite(dv)) or dc < 0 or dv < 0:
                raise InvalidObjective(f"objective is not nondecreasing at ({c}, {v})")
            if dc == 0 and dv == 0:
                raise InvalidObjective(f"objective is flat at ({c}, {v})")
    for c1, c2 in zip(cs[:-1], cs[1:]):
        for v1, v2 in zip(vs[:-1], vs[::-1][:-1]):
            mid = phi.value(0.5 * (c1 + c2), 0.5 * (v1 + v2))
            ends = 0.5 * (phi.value(c1, v1) + phi.value(c2, v2))
            if mid > ends + 1e-12 * max(1.0, abs(ends)):
                raise InvalidObjective(f"objective is not convex between ({c1}, {v1}) and ({c2}, {v2})")


def convex_ratio(phi, cost, var, n):
    """alpha implied by the multiplier phi_v / phi_c at (cost, var)."""
    dc = phi.d_cost(cost, var)
    if dc <= 0:
        return math.inf
    return phi.d_var(cost, var) / (dc * n * n)


def solve_convex(prior, n, phi, family=None):
    """Minimise phi(cost, vstar) over all offer laws."""
    ConvexObjective(n, phi)
    fam = family or Family(prior)
    hi = fam.alpha_max
    c_lo, v_lo = fam.unit(ALPHA_MIN)
    c_hi, v_hi = fam.unit(hi)
    check_objective(phi, (n * c_lo, n * c_hi), (v_hi / n, v_lo / n))

    def gap(a):
        c, v = fam.unit(a)
        r = convex_ratio(phi, n * c, v / n, n)
        if r == 0:
            return math.inf
        return math.log(a) - math.log(r) if math.isfinite(r) else -math.inf

    g_lo, g_hi = gap(ALPHA_MIN), gap(hi)
    notes = []
    if g_lo > 0 or g_hi < 0:
        if hi < ALPHA_MAX and g_hi < 0:
            # the multiplier asks for more variance weight than any law can use
            alpha = hi
            notes.append("stationarity pushes past the saturation point; returning the point-mass design")
        else:
            raise NoCrossing(f"no stationary alpha in [{ALPHA_MIN}, {hi}]")
    else:
        alpha = _log_bisect(gap, ALPHA_MIN, hi, rtol=1e-12)
    problem = {"variant": "convex", "n": n, "objective": phi.name}
    design = _design(fam, alpha, n, problem=problem, notes=notes)
    design.problem["stationarity_residual"] = stationarity_residual(phi, design)
    return design


def stationarity_residual(phi, design):
    """Relative gap between alpha and phi_v / (n^2 phi_c) at the design."""
    r = convex_ratio(phi, design.cost, design.vstar, design.n)
    return abs(design.alpha - r) / r


def tradeoff_residual(fam, alpha, beta):
    """sqrt(alpha) V1 - (C1 + beta) / sqrt(alpha), relative to the larger side."""
    c, v = fam.unit(alpha)
    left, right = math.sqrt(alpha) * v, (c + beta) / math.sqrt(alpha)
    return (left - right) / max(left, right)


def zero_decline_alpha(prior, iters=MAX_ITER):
    """Largest alpha at which the law still keeps a decline atom (truncation at 0)."""
    raw = find_irregular_intervals(prior)
    lo = prior.lo

    def keeps(a):
        return _check_G(prior, a, iron(prior, a, raw), lo) >= 0

    a, b = math.log(ALPHA_MIN), math.log(saturation_alpha(prior))
    if keeps(math.exp(b)):
        return math.exp(b)
    for _ in range(iters):
        m = 0.5 * (a + b)
        if keeps(math.exp(m)):
            a = m
        else:
            b = m
        if b - a < 1e-15:
            break
    return math.exp(a)


def solve_variable_n(prior, beta, budget=None, vmax=None, family=None):
    """Choose both n and alpha when each recruit costs ``beta``."""
    VariableN(beta, budget, vmax)
    fam = family or Family(prior)
    if beta == 0:
        return _solve_free_recruits(fam, budget, vmax)
    hi = fam.alpha_max
    r_lo, r_hi = tradeoff_residual(fam, ALPHA_MIN, beta), tradeoff_residual(fam, hi, beta)
    notes = []
    if r_lo > 0:
        raise NoCrossing("trade-off equation has no root above the smallest alpha")
    if r_hi < 0:
        alpha = hi
        notes.append("trade-off root lies beyond the saturation point; using the point-mass design")
    else:
        alpha = _log_bisect(lambda a: tradeoff_residual(fam, a, beta), ALPHA_MIN, hi, rtol=1e-12)
    residual = tradeoff_residual(fam, alpha, beta)
    c1, v1 = fam.unit(alpha)
    if budget is not None:
        n_real = budget / (beta + c1)
    else:
        n_real = v1 / vmax
    design = None
    for n in _rounding_candidates(n_real):
        try:
            if budget is not None:
                design = solve_budget(fam.prior, n, budget, beta, family=fam)
            else:
                design = solve_variance(fam.prior, n, vmax, beta, family=fam)
            break
        except (InfeasibleBudget, InfeasibleVariance) as exc:
            notes.append(f"n={n} infeasible after rounding: {exc}")
    if design is None:
        if budget is not None:
            raise InfeasibleBudget(f"budget {budget} cannot cover even one recruit at cost {beta}")
        raise InfeasibleVariance(f"variance bound {vmax} is unattainable for every integer n near {n_real}")
    design.problem.update(
        variant="variable_n",
        tradeoff_alpha=alpha,
        tradeoff_residual=residual,
        n_continuous=n_real,
        budget=budget,
        vmax=vmax,
    )
    design.notes.extend(notes)
    return design


def _rounding_candidates(x):
    near = max(1, int(round(x)))
    out = [near]
    for alt in (math.floor(x), math.ceil(x)):
        if alt >= 1 and alt not in out:
            out.append(int(alt))
    return out


def _solve_free_recruits(fam, budget, vmax):
    prior = fam.prior
    if prior.lo <= 0:
        raise NoFiniteOptimum("costs reach 0, so the objective keeps improving as n grows")
    a0 = zero_decline_alpha(prior)
    c0, v0 = fam.unit(a0)
    if budget is not None:
        n = max(1, math.ceil(budget / c0 * (1 - 1e-12)))
        design = solve_budget(prior, n, budget, family=fam)
    else:
        n = max(1, math.ceil(v0 / vmax * (1 - 1e-12)))
        design = solve_variance(prior, n, vmax, family=fam)
    design.problem.update(variant="variable_n", budget=budget, vmax=vmax, threshold_alpha=a0)
    design.notes.append(
        f"with free recruits every n >= {n} reaches the same objective (alpha scales as 1/n^2); "
        "the smallest such n is returned"
    )
    return design


def solve(prior, problem, family=None):
    """Dispatch on the problem variant."""
    if isinstance(problem, MinVarianceGivenBudget):
        return solve_budget(prior, problem.n, problem.budget, family=family)
    if isinstance(problem, MinCostGivenVariance):
        return solve_variance(prior, problem.n, problem.vmax, family=family)
    if isinstance(problem, ConvexObjective):
        return solve_convex(prior, problem.n, problem.phi, family=family)
    if isinstance(problem, VariableN):
        return solve_variable_n(prior, problem.beta, problem.budget, problem.vmax, family=family)
    raise TypeError(f"unknown problem {problem!r}")
