"""Cost, worst-case variance proxy, first variations and the optimality certificate."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InfiniteVariance
from .quadrature import CumulativeIntegral, cell_integrals, integrate


@dataclass(frozen=True)
class FunctionalValue:
    value: float
    abs_err: float = 0.0

    def __float__(self):
        return self.value


def _law_tail(law, eps=1e-14):
    """Price beyond which the law's survival is below ``eps``."""
    top = law.upper
    if math.isfinite(top):
        return top
    x = max(1.0, max(law.knots(), default=1.0))
    while law.survival(x) > eps:
        x *= 1.5
    return x


def _points(prior, *laws):
    pts = set(k for k in prior.knots if math.isfinite(k))
    for law in laws:
        pts.update(law.knots())
    return sorted(pts)


def _expect(prior, law, phi):
    """E[phi(price)] under ``law``; phi(0) weighs the decline mass."""
    total, err = 0.0, 0.0
    pts = _points(prior, law)
    for a, b in law.continuous_pieces():
        v, e = integrate(lambda x: phi(x) * float(law.pdf(x)), a, b, points=pts)
        total += v
        err += e
    total += sum(m * phi(p) for p, m in law.atoms)
    total += law.decline_mass * phi(0.0)
    return total, err


def per_capita_cost(prior, dist):
    """int x F(x) dG(x): expected payment to one sampled individual."""
    return _expect(prior, dist, lambda x: x * float(prior.cdf(x)))


def expected_cost(prior, dist, n, beta=0.0):
    """n (beta + int x F(x) g(x) dx + sum over atoms of p F(p) m)."""
    if n < 1 or beta < 0:
        raise ValueError("need n >= 1 and beta >= 0")
    v, e = per_capita_cost(prior, dist)
    return FunctionalValue(n * (v + beta), n * e)


def _check_covered(prior, dist):
    top = dist.upper
    if top < prior.hi and float(prior.sf(top)) > 0:
        raise InfiniteVariance(f"offers never exceed {top} but costs do")


def vstar(prior, dist, n):
    """(1/n) int f / (1 - G) over the prior support."""
    _check_covered(prior, dist)

    def integrand(x):
        f = float(prior.pdf(x))
        if f == 0.0:
            return 0.0
        a = float(dist.accept_prob(x))
        return f / a if a > 0 else math.inf

    pts = _points(prior, dist)
    v, e = integrate(integrand, prior.lo, prior.hi, points=pts)
    return FunctionalValue(v / n, e / n)


def M_value(prior, dist, n, lam):
    """n int x F dG + (lam/n) int f/(1 - G)  =  cost + lam * vstar."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return expected_cost(prior, dist, n).value + lam * vstar(prior, dist, n).value


def gateaux_cost(prior, dist, direction, n):
    """First variation of the cost: n int (g_hat - g) y F(y) dy."""
    phi = lambda y: y * float(prior.cdf(y))  # noqa: E731
    hat, _ = _expect(prior, direction, phi)
    base, _ = _expect(prior, dist, phi)
    return n * (hat - base)


def _grid(prior, laws, cells=1000):
    top = max([prior.effective_upper()] + [_law_tail(law) for law in laws])
    if prior.bounded:
        top = max(top, prior.hi)
    base = np.linspace(0.0, top, cells + 1)
    pts = np.asarray([p for p in _points(prior, *laws) if 0.0 <= p <= top])
    return np.unique(np.concatenate([base, pts]))


def inverse_square_weight(prior, dist, edges):
    """W(y) = int_0^y f(x) / (1 - G(x))^2 dx as a refinable table.

    The denominator uses Pr[price >= x], which differs from the survival
    function only at atoms, a null set that quadrature nodes can still hit.
    """
    _check_covered(prior, dist)

    def integrand(x):
        s = np.asarray(dist.accept_prob(x))
        f = np.asarray(prior.pdf(x))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(f > 0, f / (s * s), 0.0)

    return CumulativeIntegral(integrand, edges)


def _expect_table(law, w, edges):
    """int W dLaw on the cell grid ``edges`` (law knots must be among them)."""
    vals, _ = cell_integrals(lambda y: w(y) * np.asarray(law.pdf(y)), edges)
    total = float(np.sum(vals))
    if law.atoms:
        prices = np.asarray([p for p, _ in law.atoms])
        total += float(np.dot(w(prices), [m for _, m in law.atoms]))
    return total


def gateaux_vstar(prior, dist, direction, n):
    """First variation of V*: -(1/n) int (g_hat - g)(y) W(y) dy.

    W is tabulated once; it carries a minus sign because moving offer mass
    up raises survival and lowers the variance.
    """
    edges = _grid(prior, (dist, direction))
    w = inverse_square_weight(prior, dist, edges)
    return -(_expect_table(direction, w, edges) - _expect_table(dist, w, edges)) / n


def gateaux_vstar_direct(prior, dist, direction, n):
    """Unswapped form (1/n) int f (G_hat - G) / (1 - G)^2, for cross-checks."""
    edges = _grid(prior, (dist, direction))

    def integrand(x):
        s = np.asarray(dist.accept_prob(x))
        f = np.asarray(prior.pdf(x))
        diff = s - np.asarray(direction.survival(x))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(f > 0, f * diff / (s * s), 0.0)

    vals, _ = cell_integrals(integrand, edges)
    return float(np.sum(vals)) / n


@dataclass
class CertificateReport:
    """Pointwise first variation H of the Lagrangian on a price grid."""

    lam: float
    x: np.ndarray
    h: np.ndarray
    support_constant: float
    max_flatness_deviation: float
    min_off_support_slack: float
    tolerance: float
    scale: float
    passed: bool
    ironed: tuple = ()

    def to_json(self):
        return {
            "lambda": self.lam,
            "support_constant": self.support_constant,
            "max_flatness_deviation": self.max_flatness_deviation,
            "min_off_support_slack": self.min_off_support_slack,
            "tolerance": self.tolerance,
            "passed": bool(self.passed),
            "ironed": [dict(zip(("ibar", "jbar", "h_ibar", "h_jbar", "min_inside_slack"), r)) for r in self.ironed],
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["x", "H"])
            for xv, hv in zip(self.x, self.h):
                out.writerow([repr(float(xv)), repr(float(hv))])


def certificate(prior, dist, n, lam=None, grid=2000, flat_rel_tol=1e-6):
    """Evaluate H(x) = n x F(x) - (lam/n) W(x) and test it for optimality.

    H must be constant where the offer law has mass and no smaller
    elsewhere. The tolerance is relative to the larger of |constant| and
    max n x F(x) over the support grid, since the constant can be zero.
    """
    if lam is None:
        lam = dist.alpha * n * n
    if lam <= 0:
        raise ValueError("lambda must be positive")
    top = prior.effective_upper()
    top = top * 1.25 if not prior.bounded else prior.hi * 1.25
    special = [p for p in dist.knots() if 0.0 <= p <= top]
    x = np.unique(np.concatenate([np.linspace(0.0, top, grid), special]))
    w = inverse_square_weight(prior, dist, x)
    wx = np.concatenate([[0.0], w.table[1:]])
    h = n * x * np.asarray(prior.cdf(x)) - (lam / n) * wx

    support = np.zeros(x.shape, dtype=bool)
    for a, b in dist.continuous_pieces():
        support |= (x >= a) & (x <= b)
    for p, _ in dist.atoms:
        support |= x == p
    if dist.decline_mass > 0:
        support |= x == 0.0
    if not np.any(support):
        raise ValueError("offer law has no mass on the grid")
    const = float(np.mean(h[support]))
    scale = max(abs(const), float(np.max(np.abs(n * x[support] * np.asarray(prior.cdf(x[support]))))))
    tol = flat_rel_tol * scale
    dev = float(np.max(np.abs(h[support] - const)))
    slack = float(np.min(h[~support] - const)) if np.any(~support) else math.inf
    ironed = []
    for a, b, _ in getattr(dist, "flat_pieces", ()):
        ia, ib = np.searchsorted(x, a), np.searchsorted(x, b)
        inside = h[ia:ib + 1] - const
        ironed.append((a, b, float(h[ia]), float(h[ib]), float(np.min(inside))))
    passed = dev <= tol and slack >= -tol
    return CertificateReport(lam, x, h, const, dev, slack, tol, scale, passed, tuple(ironed))
