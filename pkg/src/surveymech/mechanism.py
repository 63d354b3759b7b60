"""Mechanism semantics: posted-price transactions, utilities and incentive checks."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotMonotone
from .offer import CallableOffer, DiscreteOffer, TabulatedOffer
from .quadrature import CumulativeIntegral

log = logging.getLogger(__name__)

MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class GenericMechanism:
    """Allocation A(c) and payment-on-selection P(c) for a reported cost c.

    Built either from callables (``from_functions``) or from a table of
    strictly increasing costs (``from_table``), in which case both rules are
    linearly interpolated and held constant outside the table.
    """

    allocation: object
    payment: object
    lo: float = 0.0
    hi: float = math.inf
    d_allocation: object = None
    table: tuple | None = None

    @classmethod
    def from_functions(cls, allocation, payment, lo=0.0, hi=math.inf, d_allocation=None):
        return cls(allocation, payment, float(lo), float(hi), d_allocation)

    @classmethod
    def from_table(cls, cost, alloc, pay):
        c = np.asarray(cost, dtype=float)
        a = np.asarray(alloc, dtype=float)
        p = np.asarray(pay, dtype=float)
        if c.ndim != 1 or len(c) < 2 or not (len(c) == len(a) == len(p)):
            raise ValueError("table needs at least two rows of equal length")
        if np.any(np.diff(c) <= 0):
            raise ValueError("costs must be strictly increasing")
        if np.any(c < 0) or np.any((a < 0) | (a > 1)):
            raise ValueError("costs must be nonnegative and allocations in [0, 1]")
        return cls(
            lambda x: np.interp(x, c, a),
            lambda x: np.interp(x, c, p),
            float(c[0]),
            float(c[-1]),
            None,
            (tuple(c), tuple(a), tuple(p)),
        )

    def A(self, c):
        return _call(self.allocation, c)

    def P(self, c):
        return _call(self.payment, c)


def _call(fn, x):
    xa = np.asarray(x, dtype=float)
    try:
        out = np.asarray(fn(xa), dtype=float)
        if out.shape != xa.shape:
            raise ValueError
    except (TypeError, ValueError):
        out = np.vectorize(fn, otypes=[float])(xa)
    return float(out) if np.ndim(x) == 0 else out


def load_mechanism_csv(path):
    """Read a (cost, A, P) table with a header row."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    try:
        cols = [[float(r[k]) for r in rows] for k in ("cost", "A", "P")]
    except KeyError as exc:
        raise ValueError(f"{path}: missing column {exc}") from None
    return GenericMechanism.from_table(*cols)


def example_lottery():
    """A(c) = 1/c^2 and P(c) = 2c on costs in [1, inf)."""
    return GenericMechanism.from_functions(
        lambda c: 1.0 / np.maximum(c, 1.0) ** 2,
        lambda c: 2.0 * c,
        lo=1.0,
        d_allocation=lambda c: np.where(c > 1.0, -2.0 / np.maximum(c, 1.0) ** 3, 0.0),
    )


# ------------------------------------------------------------- transactions
@dataclass(frozen=True)
class Transaction:
    cost: float
    offered_price: float
    accepted: bool
    payment: float
    response: int | None

    def __post_init__(self):
        if self.accepted:
            assert self.payment == self.offered_price >= self.cost
        else:
            assert self.payment == 0.0 and self.response is None


def tioli_transact(dist, reported_cost, true_response, rng):
    """Draw a price; the agent takes it iff the reported cost is at most the price."""
    if reported_cost < 0:
        raise ValueError("reported cost must be nonnegative")
    price = float(dist.sample(rng))
    if reported_cost <= price:
        return Transaction(reported_cost, price, True, price, int(true_response))
    return Transaction(reported_cost, price, False, 0.0, None)


def utility(true_cost, mech, reported_cost):
    """A(c_hat) (P(c_hat) - c)."""
    return mech.A(reported_cost) * (mech.P(reported_cost) - true_cost)


def tioli_utility(cost, report, price):
    """Realised utility for a fixed posted price (vectorised)."""
    cost, report, price = (np.asarray(v, dtype=float) for v in (cost, report, price))
    return np.where(report <= price, price - cost, 0.0)


def tioli_violations(cost, report, price):
    """Indices where misreporting beats truth-telling for a fixed price."""
    gain = tioli_utility(cost, report, price) - tioli_utility(cost, cost, price)
    return np.flatnonzero(gain > 0)


def paid_above(law, x, tail=1e-16):
    """int_{[x, inf)} t dG(t): expected payment times acceptance at cost x (vectorised)."""
    xa = np.asarray(x, dtype=float)
    pieces = law.continuous_pieces()
    total = np.zeros_like(xa)
    if pieces:
        lo = pieces[0][0]
        top = law.upper
        if not math.isfinite(top):
            top = max(1.0, max(law.knots(), default=1.0))
            while law.survival(top) > tail:
                top *= 2.0
        knots = [k for k in law.knots() if lo <= k <= top]
        span = np.geomspace(max(lo, 1e-12), top, 4000) if lo > 0 else np.linspace(lo, top, 4000)
        edges = np.unique(np.concatenate([span, knots, [lo, top]]))
        cum = CumulativeIntegral(lambda t: t * np.asarray(law.pdf(t)), edges)
        whole = cum.table[-1]
        total = whole - np.where(xa <= lo, 0.0, cum(np.clip(xa, lo, top)))
    for p, m in law.atoms:
        total = total + np.where(xa <= p, p * m, 0.0)
    return float(total) if np.ndim(x) == 0 else total


def tioli_mechanism(dist):
    """(A, P) pair induced by an offer law: A(c) = Pr[p >= c], P(c) = E[p | p >= c]."""

    def payment(c):
        a = np.asarray(dist.accept_prob(c))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(a > 0, np.asarray(paid_above(dist, c)) / a, 0.0)

    return GenericMechanism.from_functions(lambda c: dist.accept_prob(c), payment, 0.0, dist.upper)


# ------------------------------------------------------------------ checks
@dataclass
class Violation:
    kind: str
    cost: float
    report: float
    amount: float


@dataclass
class TruthfulnessReport:
    violations: list = field(default_factory=list)
    pairs_checked: int = 0

    @property
    def passed(self):
        return not self.violations

    def count(self, kind):
        return sum(1 for v in self.violations if v.kind == kind)

    def to_json(self):
        return {
            "passed": self.passed,
            "pairs_checked": self.pairs_checked,
            "violations": [vars(v) for v in self.violations],
        }


def check_truthful_ir(mech, cost_grid, report_grid, rtol=1e-12):
    """Grid check of truthfulness, individual rationality and monotone A."""
    c = np.asarray(cost_grid, dtype=float)
    r = np.asarray(report_grid, dtype=float)
    if np.any(c < 0) or np.any(r < 0):
        raise ValueError("costs must be nonnegative")
    rep = TruthfulnessReport(pairs_checked=c.size * r.size)
    a_r, p_r = np.asarray(mech.A(r)), np.asarray(mech.P(r))
    a_c, p_c = np.asarray(mech.A(c)), np.asarray(mech.P(c))
    truthful = a_c * (p_c - c)
    lying = a_r[None, :] * (p_r[None, :] - c[:, None])
    slack = rtol * np.maximum(1.0, np.abs(truthful))[:, None]
    for i, j in zip(*np.nonzero(lying > truthful[:, None] + slack)):
        rep.violations.append(Violation("truthfulness", c[i], r[j], float(lying[i, j] - truthful[i])))
    for grid, a, p in ((c, a_c, p_c), (r, a_r, p_r)):
        for k in np.flatnonzero((a > 0) & (p < grid * (1 - rtol))):
            rep.violations.append(Violation("individual_rationality", grid[k], grid[k], float(grid[k] - p[k])))
    order = np.argsort(r)
    rise = np.diff(a_r[order])
    for k in np.flatnonzero(rise > MONOTONE_TOL):
        rep.violations.append(Violation("monotonicity", r[order][k], r[order][k + 1], float(rise[k])))
    return rep


def to_tioli(mech, grid=None, points=1001):
    """Posted-price law with survival equal to the mechanism's allocation rule.

    The density is -A' (the supplied derivative, or central differences);
    A(0) < 1 becomes decline mass. A tabulated mechanism maps directly to a
    piecewise-linear offer CDF 1 - A. A constant allocation yields the
    degenerate null-offer law, flagged with ``degenerate = True``.
    """
    lo = mech.lo
    top = mech.hi if math.isfinite(mech.hi) else max(10.0, 10.0 * max(lo, 1.0))
    if grid is None:
        grid = np.linspace(lo, top, points)
    grid = np.asarray(grid, dtype=float)
    vals = np.asarray(mech.A(grid))
    rise = np.diff(vals)
    if np.any(rise > MONOTONE_TOL):
        k = int(np.argmax(rise))
        raise NotMonotone(f"allocation rises from {vals[k]} to {vals[k + 1]} near cost {grid[k]}")
    if float(np.max(vals) - np.min(vals)) <= 1e-12 and not math.isfinite(mech.hi):
        log.warning("allocation is constant; only the null offer reproduces it at cost 0")
        law = DiscreteOffer((), 1.0)
        object.__setattr__(law, "degenerate", True)
        return law
    if mech.table is not None:
        cost, alloc, _ = (np.asarray(t) for t in mech.table)
        cdf = 1.0 - alloc
        if cost[0] > 0:
            cost, cdf = np.concatenate([[0.0], cost]), np.concatenate([[cdf[0]], cdf])
        law = TabulatedOffer(tuple(cost), tuple(cdf), decline_mass=float(cdf[0]))
    else:
        a0 = float(mech.A(lo))
        if a0 > 1 + 1e-12:
            raise ValueError("allocation exceeds one")
        law = CallableOffer(mech.A, lo=lo, hi=mech.hi, dsurvival=mech.d_allocation)
    object.__setattr__(law, "degenerate", False)
    return law
