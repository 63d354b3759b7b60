"""Brute-force references: a discretised offer-law program and exhaustive toy enumeration."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import isotonic_regression

from .errors import Infeasible, NotConverged, TooManyOutcomes

FLOOR = 1e-6
MAX_ITER = 100_000


@dataclass(frozen=True)
class GridProblem:
    """Offers restricted to ``grid``; s[i] = Pr[price >= grid[i]].

    A cost in (grid[i-1], grid[i]] is accepted with probability s[i], so
    vstar (at n = 1) is sum w[i] / s[i] with w the cost mass of each cell,
    and the per-capita cost is sum s[i] a[i] with a = diff(x F(x)).
    """

    grid: np.ndarray
    w: np.ndarray
    a: np.ndarray
    budget: float
    n: int = 1
    floor: float = FLOOR

    @classmethod
    def from_prior(cls, prior, budget, n=1, points=200, floor=FLOOR):
        """Uniform grid over [lo, top]; ``budget`` is the total for n people."""
        top = prior.hi if prior.bounded else prior.effective_upper()
        x = np.linspace(prior.lo, top, points)
        F = np.asarray(prior.cdf(x), dtype=float)
        F[-1] = 1.0  # the tail beyond an unbounded grid joins the last cell
        w = np.diff(F, prepend=0.0)
        xf = x * F
        a = np.diff(xf, prepend=0.0)
        if abs(w.sum() - 1.0) > 1e-6:
            raise ValueError("grid weights do not sum to one")
        return cls(x, w, a, budget / n, n, floor)

    def objective(self, s):
        return float(np.sum(self.w / s))

    def cost(self, s):
        return float(np.sum(self.a * s))


@dataclass
class GridSolution:
    survival: np.ndarray
    objective: float
    cost: float
    multiplier: float
    iterations: int
    stationarity: float
    pooled_gap: float
    floor: float


def _pooled(w, a, mu, floor):
    """Minimise sum w/s + mu a s over nonincreasing s in [floor, 1] by block pooling."""
    blocks = []  # (W, A, start, value)
    for i in range(w.size):
        W, A, start = w[i], a[i], i
        while True:
            val = _block_value(W, A, mu, floor)
            if blocks and blocks[-1][3] < val:
                pw, pa, pstart, _ = blocks.pop()
                W, A, start = W + pw, A + pa, pstart
                continue
            blocks.append((W, A, start, val))
            break
    s = np.empty(w.size)
    ends = [b[2] for b in blocks[1:]] + [w.size]
    for (_, _, start, val), end in zip(blocks, ends):
        s[start:end] = val
    return s


def _block_value(W, A, mu, floor):
    if A <= 0 or mu <= 0:
        return 1.0
    if W <= 0:
        return floor
    return min(1.0, max(floor, math.sqrt(W / (mu * A))))


def _project(y, weights, floor):
    res = isotonic_regression(y, weights=weights, increasing=False)
    return np.clip(res.x, floor, 1.0)


def grid_optimize(gp, tol=1e-8, max_iter=MAX_ITER):
    """Solve the discretised program; returns a GridSolution.

    The budget multiplier comes from bisection on the exactly pooled
    Lagrangian solution. The survival vector itself is then found by a
    diagonally scaled projected gradient from the constant start s = 1,
    stopped when one projected step moves it by less than ``tol``.
    """
    w, a, floor = np.asarray(gp.w), np.asarray(gp.a), gp.floor
    ones = np.ones_like(w)
    if gp.cost(ones) <= gp.budget:
        mu = 0.0
    else:
        if gp.cost(np.full_like(w, floor)) > gp.budget:
            raise Infeasible("budget is below the cost of the smallest grid survival", (gp.cost(np.full_like(w, floor)) * gp.n,))
        lo, hi = -60.0, 60.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if gp.cost(_pooled(w, a, math.exp(mid), floor)) > gp.budget:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-13:
                break
        mu = math.exp(hi)
    pooled = _pooled(w, a, mu, floor)

    s = ones.copy()
    move = math.inf
    for it in range(1, max_iter + 1):
        grad = -w / s**2 + mu * a
        scale = 2.0 * w / s**3 + 1e-300
        scale = np.maximum(scale, 1e-12 * scale.max())
        nxt = _project(s - grad / scale, scale, floor)
        move = float(np.max(np.abs(nxt - s)))
        s = nxt
        if move <= tol:
            break
    else:
        raise NotConverged(f"projected gradient still moving by {move} after {max_iter} iterations")
    return GridSolution(
        s, gp.objective(s), gp.cost(s) * gp.n, mu, it, move, float(np.max(np.abs(s - pooled))), floor
    )


# ------------------------------------------------------------------ toys
@dataclass(frozen=True)
class ToyResult:
    mean_ht: float
    var_ht: float
    mean_tilde: float
    var_tilde: float
    expected_cost: float
    expected_q: float
    outcomes: int


def enumerate_toy(costs, q_bits, atoms, cost_probs=None, decline_mass=0.0, n=1, limit=10**6):
    """Exact moments of both estimators by walking every joint outcome.

    Individuals draw a cost (with its fixed response bit) and an offer
    independently; ``atoms`` are (price, mass) pairs and the remaining
    ``decline_mass`` is the null offer.
    """
    costs = np.asarray(costs, dtype=float)
    q = np.asarray(q_bits, dtype=float)
    pc = np.full(costs.size, 1.0 / costs.size) if cost_probs is None else np.asarray(cost_probs, dtype=float)
    prices = np.asarray([0.0] * (decline_mass > 0) + [p for p, _ in atoms], dtype=float)
    pm = np.asarray([decline_mass] * (decline_mass > 0) + [m for _, m in atoms], dtype=float)
    if abs(pc.sum() - 1) > 1e-12 or abs(pm.sum() - 1) > 1e-12:
        raise ValueError("probabilities must sum to one")
    per = costs.size * prices.size
    total = per**n
    if total > limit:
        raise TooManyOutcomes(f"{total} outcomes exceed the limit {limit}")
    accept = np.asarray([np.sum(pm[prices >= c]) for c in costs])
    prob, ht, tilde, pay = [], [], [], []
    for (i, c), (j, p) in itertools.product(enumerate(costs), enumerate(prices)):
        prob.append(pc[i] * pm[j])
        took = c <= p and accept[i] > 0
        ht.append(q[i] / accept[i] if took else 0.0)
        tilde.append((1 - 2 * q[i]) / accept[i] if took else 0.0)
        pay.append(p if took else 0.0)
    prob, ht, tilde, pay = map(np.asarray, (prob, ht, tilde, pay))

    def joint(vals):
        """Exact mean and variance of the average of n iid copies, by enumeration."""
        P = np.ones(1)
        S = np.zeros(1)
        for _ in range(n):
            P = np.multiply.outer(P, prob).ravel()
            S = np.add.outer(S, vals).ravel()
        S = S / n
        mean = float(np.dot(P, S))
        return mean, float(np.dot(P, (S - mean) ** 2))

    m_ht, v_ht = joint(ht)
    m_t, v_t = joint(tilde)
    m_pay, _ = joint(pay)
    return ToyResult(m_ht, v_ht, m_t, v_t, m_pay * n, float(np.dot(pc, q)), total)
