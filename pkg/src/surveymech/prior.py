"""Cost priors: density, CDF, density slope, sampling and regularity scans."""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import GridTooCoarse, NonFiniteDerivative
from .quadrature import bisect, bisect_increasing

log = logging.getLogger(__name__)

KINDS = ("exponential", "uniform", "lognormal", "piecewise_polynomial")
TAIL_MASS = 1e-12


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class PriorSpec:
    """Marginal distribution of participation costs.

    Build instances with the classmethods; the piecewise-polynomial form is
    normalised on construction. Coefficients are per piece, ascending powers
    of ``x - left_breakpoint``.
    """

    kind: str
    params: tuple = ()
    breakpoints: tuple = ()
    coefficients: tuple = ()
    _mass: tuple = field(default=(), repr=False, compare=False)

    @classmethod
    def exponential(cls, rate=1.0):
        if rate <= 0:
            raise ValueError("rate must be positive")
        return cls("exponential", (float(rate),))

    @classmethod
    def uniform(cls, lo, hi):
        if not 0 <= lo < hi:
            raise ValueError("uniform prior needs 0 <= lo < hi")
        return cls("uniform", (float(lo), float(hi)))

    @classmethod
    def lognormal(cls, mu=0.0, sigma=1.0):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        return cls("lognormal", (float(mu), float(sigma)))

    @classmethod
    def piecewise_polynomial(cls, breakpoints, coefficients):
        bps = tuple(float(b) for b in breakpoints)
        rows = [np.asarray(c, dtype=float) for c in coefficients]
        if len(bps) < 2 or len(rows) != len(bps) - 1:
            raise ValueError("need len(breakpoints) == len(coefficients) + 1 >= 2")
        if bps[0] < 0 or any(b1 <= b0 for b0, b1 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be nonnegative and strictly increasing")
        masses = []
        for (a, b), c in zip(zip(bps, bps[1:]), rows):
            anti = np.polynomial.polynomial.polyint(c)
            masses.append(np.polynomial.polynomial.polyval(b - a, anti))
        total = float(sum(masses))
        if not total > 0:
            raise ValueError("piecewise density has no mass")
        if abs(total - 1.0) > 1e-12:
            log.info("normalising piecewise-polynomial prior (mass %.12g)", total)
        rows = [c / total for c in rows]
        for (a, b), c in zip(zip(bps, bps[1:]), rows):
            t = np.linspace(0.0, b - a, 257)
            if np.min(np.polynomial.polynomial.polyval(t, c)) < -1e-12:
                raise ValueError(f"density is negative on [{a}, {b}]")
        for k in range(1, len(bps) - 1):
            left = np.polynomial.polynomial.polyval(bps[k] - bps[k - 1], rows[k - 1])
            right = rows[k][0]
            if abs(left - right) > 1e-9 * max(1.0, abs(left)):
                raise ValueError(f"density must be continuous at interior breakpoint {bps[k]}")
        cum = np.concatenate([[0.0], np.cumsum(np.asarray(masses) / total)])
        return cls(
            "piecewise_polynomial",
            (),
            bps,
            tuple(tuple(float(v) for v in c) for c in rows),
            tuple(float(v) for v in cum),
        )

    # ------------------------------------------------------------------ support
    @property
    def lo(self):
        if self.kind in ("exponential", "lognormal"):
            return 0.0
        if self.kind == "uniform":
            return self.params[0]
        return self.breakpoints[0]

    @property
    def hi(self):
        if self.kind in ("exponential", "lognormal"):
            return math.inf
        if self.kind == "uniform":
            return self.params[1]
        return self.breakpoints[-1]

    @property
    def support(self):
        return (self.lo, self.hi)

    @property
    def bounded(self):
        return math.isfinite(self.hi)

    @property
    def knots(self):
        """Points where the density may fail to be smooth."""
        if self.kind == "piecewise_polynomial":
            return self.breakpoints
        if self.kind == "uniform":
            return self.params
        return (0.0,)

    def effective_upper(self, tail=TAIL_MASS):
        """Smallest x with 1 - F(x) below ``tail`` (the support top if bounded)."""
        if self.bounded:
            return self.hi
        if self.kind == "exponential":
            return -math.log(tail) / self.params[0]
        mu, sigma = self.params
        return math.exp(mu - sigma * special.ndtri(tail))

    # -------------------------------------------------------------- evaluation
    def _piece_index(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(idx, 0, len(self.coefficients) - 1)

    def _poly_eval(self, x, deriv):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        idx = self._piece_index(x)
        inside = (x >= self.lo) & (x <= self.hi)
        for k, c in enumerate(self.coefficients):
            sel = inside & (idx == k)
            if not np.any(sel):
                continue
            t = x[sel] - self.breakpoints[k]
            if deriv == "f":
                out[sel] = np.polynomial.polynomial.polyval(t, c)
            elif deriv == "fp":
                out[sel] = np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyder(c))
            else:
                anti = np.polynomial.polynomial.polyint(c)
                out[sel] = self._mass[k] + np.polynomial.polynomial.polyval(t, anti)
        if deriv == "F":
            out = np.where(x > self.hi, 1.0, out)
            out = np.clip(out, 0.0, 1.0)
        return out

    def pdf(self, x):
        xa = np.asarray(x, dtype=float)
        if self.kind == "exponential":
            r = self.params[0]
            out = np.where(xa >= 0, r * np.exp(-r * np.maximum(xa, 0.0)), 0.0)
        elif self.kind == "uniform":
            lo, hi = self.params
            out = np.where((xa >= lo) & (xa <= hi), 1.0 / (hi - lo), 0.0)
        elif self.kind == "lognormal":
            mu, sigma = self.params
            pos = xa > 0
            safe = np.where(pos, xa, 1.0)
            z = (np.log(safe) - mu) / sigma
            out = np.where(pos, np.exp(-0.5 * z * z) / (safe * sigma * math.sqrt(2 * math.pi)), 0.0)
        else:
            out = self._poly_eval(xa, "f")
        return _scalar_or_array(x, out)

    def cdf(self, x):
        xa = np.asarray(x, dtype=float)
        if self.kind == "exponential":
            r = self.params[0]
            out = np.where(xa > 0, -np.expm1(-r * np.maximum(xa, 0.0)), 0.0)
        elif self.kind == "uniform":
            lo, hi = self.params
            out = np.clip((xa - lo) / (hi - lo), 0.0, 1.0)
        elif self.kind == "lognormal":
            mu, sigma = self.params
            pos = xa > 0
            safe = np.where(pos, xa, 1.0)
            out = np.where(pos, special.ndtr((np.log(safe) - mu) / sigma), 0.0)
        else:
            out = self._poly_eval(xa, "F")
        return _scalar_or_array(x, out)

    def sf(self, x):
        """1 - F(x), computed without cancellation where a closed form allows."""
        xa = np.asarray(x, dtype=float)
        if self.kind == "exponential":
            r = self.params[0]
            out = np.where(xa > 0, np.exp(-r * np.maximum(xa, 0.0)), 1.0)
        elif self.kind == "lognormal":
            mu, sigma = self.params
            pos = xa > 0
            safe = np.where(pos, xa, 1.0)
            out = np.where(pos, special.ndtr(-(np.log(safe) - mu) / sigma), 1.0)
        else:
            out = 1.0 - np.asarray(self.cdf(xa))
        return _scalar_or_array(x, out)

    def dpdf(self, x):
        """Density slope; right limit at piecewise-polynomial breakpoints."""
        xa = np.asarray(x, dtype=float)
        if self.kind == "exponential":
            r = self.params[0]
            out = np.where(xa >= 0, -r * r * np.exp(-r * np.maximum(xa, 0.0)), 0.0)
        elif self.kind == "uniform":
            out = np.zeros_like(xa)
        elif self.kind == "lognormal":
            mu, sigma = self.params
            pos = xa > 0
            safe = np.where(pos, xa, 1.0)
            f = np.asarray(self.pdf(xa))
            out = np.where(pos, -f / safe * (1.0 + (np.log(safe) - mu) / sigma**2), 0.0)
        else:
            out = self._poly_eval(xa, "fp")
        return _scalar_or_array(x, out)

    def ppf(self, u):
        ua = np.asarray(u, dtype=float)
        if self.kind == "exponential":
            out = -np.log1p(-ua) / self.params[0]
        elif self.kind == "uniform":
            lo, hi = self.params
            out = lo + ua * (hi - lo)
        elif self.kind == "lognormal":
            mu, sigma = self.params
            out = np.exp(mu + sigma * special.ndtri(ua))
        else:
            out = bisect_increasing(self.cdf, ua, self.lo, self.hi, iters=64)
        return _scalar_or_array(u, out)

    # ------------------------------------------------------------------- JSON
    def to_json(self):
        if self.kind == "exponential":
            return {"kind": "exponential", "rate": self.params[0]}
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.params[0], "hi": self.params[1]}
        if self.kind == "lognormal":
            return {"kind": "lognormal", "mu": self.params[0], "sigma": self.params[1]}
        return {
            "kind": "piecewise_polynomial",
            "breakpoints": list(self.breakpoints),
            "coefficients": [list(c) for c in self.coefficients],
        }

    @classmethod
    def from_json(cls, data):
        kind = data.get("kind")
        if kind == "exponential":
            return cls.exponential(data.get("rate", 1.0))
        if kind == "uniform":
            return cls.uniform(data["lo"], data["hi"])
        if kind == "lognormal":
            return cls.lognormal(data.get("mu", 0.0), data.get("sigma", 1.0))
        if kind == "piecewise_polynomial":
            return cls.piecewise_polynomial(data["breakpoints"], data["coefficients"])
        raise ValueError(f"unknown prior kind {kind!r}")


@dataclass(frozen=True)
class IrregularInterval:
    """Open interval (i, j) on which 2 f^2 < f' F."""

    i: float
    j: float

    def __post_init__(self):
        if not self.i < self.j:
            raise ValueError("IrregularInterval needs i < j")


def eval(prior, x):  # noqa: A001 - mirrors the operation name
    """Return ``(f(x), F(x), f'(x))``.

    Raises NonFiniteDerivative exactly at a piecewise-polynomial breakpoint.
    Negative costs are simply off support.
    """
    if prior.kind == "piecewise_polynomial" and x in prior.breakpoints:
        raise NonFiniteDerivative(f"x={x} is a breakpoint; use one-sided evaluation")
    if x < prior.lo or x > prior.hi:
        return 0.0, (0.0 if x < prior.lo else 1.0), 0.0
    return prior.pdf(x), prior.cdf(x), prior.dpdf(x)


def sample_cost(prior, rng, size=None):
    """Inverse-CDF draw(s) from the prior."""
    return prior.ppf(rng.random(size))


def regularity_gap(prior, x):
    """2 f(x)^2 - f'(x) F(x); negative inside irregular intervals."""
    f = prior.pdf(x)
    return 2.0 * np.square(f) - prior.dpdf(x) * prior.cdf(x)


@functools.lru_cache(maxsize=64)
def find_irregular_intervals(prior, grid_resolution=4096, xtol=1e-13):
    """Grid scan of the regularity gap with bisection refinement of sign changes."""
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be >= 2")
    lo, hi = prior.lo, prior.effective_upper()
    xs = np.linspace(lo, hi, grid_resolution + 1)
    gap = np.asarray(regularity_gap(prior, xs))
    neg = gap < 0
    mids = 0.5 * (xs[:-1] + xs[1:])
    mneg = np.asarray(regularity_gap(prior, mids)) < 0
    both_same = neg[:-1] == neg[1:]
    if np.any(both_same & (mneg != neg[:-1])):
        k = int(np.argmax(both_same & (mneg != neg[:-1])))
        raise GridTooCoarse(f"two sign changes inside cell [{xs[k]}, {xs[k + 1]}]")

    def root(a, b):
        return bisect(lambda x: float(regularity_gap(prior, x)), a, b, xtol=xtol)

    out = []
    start = lo if neg[0] else None
    for k in range(grid_resolution):
        if neg[k] == neg[k + 1]:
            continue
        edge = root(xs[k], xs[k + 1])
        if neg[k + 1]:
            start = edge
        else:
            out.append(IrregularInterval(start, edge))
            start = None
    if start is not None:
        out.append(IrregularInterval(start, hi))
    return tuple(out)
