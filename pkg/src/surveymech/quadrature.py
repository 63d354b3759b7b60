"""Adaptive quadrature and bisection helpers."""

import math
import warnings

import numpy as np
from scipy import integrate as _integrate
from scipy import optimize as _optimize

from .errors import NoConvergence, QuadratureFailure

EPSABS = 1e-9
EPSREL = 1e-8


def _quad(func, a, b, epsabs, epsrel, limit):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _integrate.IntegrationWarning)
        value, err = _integrate.quad(func, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)[:2]
    if not math.isfinite(value):
        raise QuadratureFailure(f"non-finite integral on [{a}, {b}]")
    # quad reports its own bound; only reject when it is far outside the request
    if err > 100.0 * max(epsabs, epsrel * abs(value)):
        raise QuadratureFailure(f"quadrature on [{a}, {b}] reached error {err:.3g}")
    return value, err


def integrate(func, a, b, points=(), epsabs=EPSABS, epsrel=EPSREL, limit=200):
    """Integrate ``func`` over [a, b], splitting at ``points``.

    An infinite upper limit is handled by the substitution
    ``x = c + t / (1 - t)`` on the last piece. Returns ``(value, abs_err)``.
    """
    if b <= a:
        return 0.0, 0.0
    inner = sorted({float(p) for p in points if a < p < b and math.isfinite(p)})
    nodes = [a] + inner
    total = 0.0
    error = 0.0
    finite_end = b if math.isfinite(b) else None
    edges = nodes + ([finite_end] if finite_end is not None else [])
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = _quad(func, lo, hi, epsabs, epsrel, limit)
        total += v
        error += e
    if finite_end is None:
        c = nodes[-1]

        def mapped(t):
            if t >= 1.0:
                return 0.0
            s = 1.0 - t
            return func(c + t / s) / (s * s)

        v, e = _quad(mapped, 0.0, 1.0, epsabs, epsrel, limit)
        total += v
        error += e
    return total, error


def bisect(func, lo, hi, xtol=1e-10, maxiter=200):
    """Root of a scalar function with a sign change on [lo, hi]."""
    try:
        return _optimize.bisect(func, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=maxiter)
    except RuntimeError as exc:
        raise NoConvergence(str(exc)) from exc


def bisect_increasing(func, target, lo, hi, iters=80):
    """Vectorised bisection: smallest x in [lo, hi] with func(x) >= target.

    ``func`` must be nondecreasing and accept arrays. ``lo``/``hi`` may be
    scalars or arrays broadcastable against ``target``.
    """
    target = np.asarray(target, dtype=float)
    a = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    b = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    for _ in range(iters):
        mid = 0.5 * (a + b)
        above = func(mid) >= target
        b = np.where(above, mid, b)
        a = np.where(above, a, mid)
    return b


_GL = {}


def _legendre(order):
    if order not in _GL:
        from scipy.special import roots_legendre

        _GL[order] = roots_legendre(order)
    return _GL[order]


def cell_integrals(func, edges, order=20):
    """Fixed-order Gauss-Legendre integral of a vectorised ``func`` on each cell.

    Returns ``(values, err)`` where ``err`` compares against a half-order rule.
    Cells must not straddle a kink of the integrand.
    """
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)

    def rule(k):
        t, w = _legendre(k)
        x = mid[:, None] + half[:, None] * t[None, :]
        return half * (np.asarray(func(x.ravel())).reshape(x.shape) @ w)

    hi = rule(order)
    lo = rule(order // 2)
    return hi, np.abs(hi - lo)


class CumulativeIntegral:
    """W(y) = int_{edges[0]}^y func, tabulated on ``edges`` and refined inside cells."""

    def __init__(self, func, edges, order=20):
        self.func = func
        self.order = order
        self.edges = np.asarray(edges, dtype=float)
        vals, err = cell_integrals(func, self.edges, order)
        self.table = np.concatenate([[0.0], np.cumsum(vals)])
        self.err = float(np.sum(err))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        flat = y.ravel()
        k = np.clip(np.searchsorted(self.edges, flat, side="right") - 1, 0, self.edges.size - 2)
        a = self.edges[k]
        t, w = _legendre(self.order)
        half = 0.5 * (flat - a)
        x = (a + half)[:, None] + half[:, None] * t[None, :]
        part = half * (np.asarray(self.func(x.ravel())).reshape(x.shape) @ w)
        return (self.table[k] + part).reshape(y.shape)
