"""Offer-price laws for take-it-or-leave-it mechanisms.

``OfferDistribution`` is the optimal family built from a prior and a scale
alpha. The other laws (point masses, tabulated CDFs, survival callables,
mixtures) share the same evaluation surface so the functionals can score any
mechanism.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateDenominator, DegenerateMechanism, NoConvergence
from .prior import find_irregular_intervals
from .quadrature import bisect, bisect_increasing, integrate

log = logging.getLogger(__name__)

XTOL = 1e-10
MERGE_LIMIT = 1000
INVERSE_CELLS = 4096
NEWTON_STEPS = 6


def _out(x, arr):
    return float(arr) if np.ndim(x) == 0 else arr


def _apply(fn, xa):
    """Evaluate ``fn`` on an array, falling back to elementwise calls."""
    try:
        out = np.asarray(fn(xa), dtype=float)
        if out.shape == xa.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.vectorize(fn, otypes=[float])(xa)


class OfferLaw:
    """Law of the posted price. Price 0 is the null offer (decline mass)."""

    decline_mass = 0.0
    atoms = ()

    def survival(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def continuous_pieces(self):
        """Intervals (a, b) carrying the absolutely continuous part."""
        raise NotImplementedError

    def knots(self):
        pts = {0.0}
        for a, b in self.continuous_pieces():
            pts.update((a, b))
        pts.update(p for p, _ in self.atoms)
        return tuple(sorted(p for p in pts if math.isfinite(p)))

    @property
    def upper(self):
        """Smallest price with CDF equal to one (inf for unbounded laws)."""
        tops = [b for _, b in self.continuous_pieces()] + [p for p, _ in self.atoms]
        return max(tops, default=0.0)

    def cdf(self, x):
        return _out(x, 1.0 - np.asarray(self.survival(x)))

    def accept_prob(self, x):
        """Pr[price >= x]: the allocation probability for a reported cost x."""
        xa = np.asarray(x, dtype=float)
        out = np.asarray(self.survival(xa), dtype=float).copy()
        for p, m in self.atoms:
            out = out + np.where(xa == p, m, 0.0)
        out = out + np.where(xa == 0.0, self.decline_mass, 0.0)
        out = np.where(xa < 0, 1.0, out)
        return _out(x, np.clip(out, 0.0, 1.0))

    def piece_mass(self, a, b):
        """Continuous mass on (a, b), excluding any atom at b."""
        if not math.isfinite(b):
            return float(self.survival(a))
        at_b = sum(m for p, m in self.atoms if p == b)
        return float(self.survival(a) - self.survival(b) - at_b)

    def total_mass(self):
        cont = sum(self.piece_mass(a, b) for a, b in self.continuous_pieces())
        return self.decline_mass + cont + sum(m for _, m in self.atoms)

    def _ppf_bracket(self):
        top = self.upper
        if math.isfinite(top):
            return top
        x = max(1.0, max(self.knots(), default=1.0))
        while self.survival(x) > 1e-17:
            x *= 2.0
        return x

    def ppf_bisect(self, u):
        """Inverse CDF inf{x >= 0 : CDF(x) >= u} by plain bisection (reference)."""
        ua = np.asarray(u, dtype=float)
        hi = self._ppf_bracket()
        out = bisect_increasing(self.cdf, ua, 0.0, hi, iters=64)
        out = np.where(ua <= self.decline_mass, 0.0, out)
        # snap to atoms: bisection lands within rounding of the jump point
        for p, _ in self.atoms:
            out = np.where(np.abs(out - p) <= 1e-12 * max(1.0, p), p, out)
        return _out(u, out)

    @functools.cached_property
    def _inverse_table(self):
        top = self._ppf_bracket()
        xs = [np.zeros(1)]
        for a, b in self.continuous_pieces():
            b = min(b, top)
            if b > a:
                xs.append(np.linspace(a, b, INVERSE_CELLS + 1))
                # dense near the left end, where densities spike, and along long tails
                xs.append(a + (b - a) * np.geomspace(1e-12, 1.0, INVERSE_CELLS))
        xs = np.unique(np.concatenate(xs + [np.asarray([p for p, _ in self.atoms] + [top])]))
        ys = np.asarray(self.cdf(xs), dtype=float)
        if self.atoms:
            # the left limit at each atom, so the jump is a vertical segment
            px = np.asarray([p for p, _ in self.atoms])
            py = np.asarray(self.cdf(px)) - np.asarray([m for _, m in self.atoms])
            xs, ys = np.concatenate([xs, px]), np.concatenate([ys, py])
            order = np.lexsort((ys, xs))
            xs, ys = xs[order], ys[order]
        return xs, np.maximum.accumulate(ys)

    def ppf(self, u):
        """Inverse CDF inf{x >= 0 : CDF(x) >= u}.

        Linear interpolation in a table of the CDF, then Newton steps kept inside
        the bracketing table cell.
        """
        shape = np.shape(u)
        ua = np.asarray(u, dtype=float).ravel()
        xs, ys = self._inverse_table
        k = np.clip(np.searchsorted(ys, ua, side="left"), 1, xs.size - 1)
        x0, x1, y0, y1 = xs[k - 1], xs[k], ys[k - 1], ys[k]
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(y1 > y0, (ua - y0) / (y1 - y0), 1.0)
        x = x0 + np.clip(w, 0.0, 1.0) * (x1 - x0)
        active = np.flatnonzero((x1 > x0) & (y1 > y0))
        for _ in range(NEWTON_STEPS):
            if active.size == 0:
                break
            xa_ = x[active]
            g = np.asarray(self.pdf(xa_))
            res = np.asarray(self.cdf(xa_)) - ua[active]
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(g > 0, res / g, 0.0)
            x[active] = np.clip(xa_ - step, x0[active], x1[active])
            active = active[np.abs(step) > 1e-15 * np.maximum(1.0, np.abs(xa_))]
        x = np.where(ua <= self.decline_mass, 0.0, x)
        x = np.where(ua >= ys[-1], xs[-1], x)
        return _out(u, x.reshape(shape))

    def sample(self, rng, size=None):
        return self.ppf(rng.random(size))


def sample_offer(dist, rng, size=None):
    """Inverse-CDF draw(s) of posted prices; 0 encodes the null offer."""
    return dist.sample(rng, size)


def offer_cdf(dist, x):
    return dist.cdf(x)


def offer_survival(dist, x):
    return dist.survival(x)


# --------------------------------------------------------------------------
# simple laws


@dataclass(frozen=True)
class DiscreteOffer(OfferLaw):
    """Finitely many posted prices."""

    atoms: tuple = ()
    decline_mass: float = 0.0

    def __post_init__(self):
        atoms = tuple(sorted((float(p), float(m)) for p, m in self.atoms if m > 0))
        if any(p <= 0 for p, _ in atoms):
            raise ValueError("atom prices must be positive; use decline_mass for price 0")
        object.__setattr__(self, "atoms", atoms)
        if abs(self.total_mass() - 1.0) > 1e-9:
            raise ValueError("offer masses must sum to one")

    @classmethod
    def point_mass(cls, price):
        if price == 0:
            return cls((), 1.0)
        return cls(((price, 1.0),))

    def survival(self, x):
        xa = np.asarray(x, dtype=float)
        out = np.where(xa < 0, 1.0, 1.0 - self.decline_mass)
        for p, m in self.atoms:
            out = out - np.where(xa >= p, m, 0.0)
        return _out(x, np.clip(out, 0.0, 1.0))

    def pdf(self, x):
        return _out(x, np.zeros_like(np.asarray(x, dtype=float)))

    def continuous_pieces(self):
        return ()


@dataclass(frozen=True)
class TabulatedOffer(OfferLaw):
    """Piecewise-linear CDF through (price, cdf) rows.

    Mass below the first row sits at the first price (or is decline mass when
    that price is 0); any shortfall of the last row from 1 is an atom there.
    """

    prices: tuple
    cdf_values: tuple
    decline_mass: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.prices, dtype=float)
        c = np.asarray(self.cdf_values, dtype=float)
        if x.ndim != 1 or x.size < 2 or x.size != c.size:
            raise ValueError("need matching price and cdf tables with at least two rows")
        if np.any(np.diff(x) <= 0) or x[0] < 0:
            raise ValueError("prices must be nonnegative and strictly increasing")
        if np.any(np.diff(c) < -1e-12) or c[0] < self.decline_mass - 1e-12 or c[-1] > 1 + 1e-12:
            raise ValueError("cdf table must be nondecreasing within [decline_mass, 1]")
        if x[0] == 0.0 and self.decline_mass == 0.0:
            object.__setattr__(self, "decline_mass", float(c[0]))
        atoms = []
        if c[0] > self.decline_mass + 1e-15:
            atoms.append((float(x[0]), float(c[0] - self.decline_mass)))
        if c[-1] < 1.0 - 1e-15:
            atoms.append((float(x[-1]), float(1.0 - c[-1])))
        object.__setattr__(self, "atoms", tuple(atoms))
        object.__setattr__(self, "_x", x)
        object.__setattr__(self, "_c", np.minimum(c, 1.0))

    def survival(self, x):
        xa = np.asarray(x, dtype=float)
        cdf = np.interp(xa, self._x, self._c)
        cdf = np.where(xa < self._x[0], self.decline_mass, cdf)
        cdf = np.where(xa >= self._x[-1], 1.0, cdf)
        cdf = np.where(xa < 0, 0.0, cdf)
        return _out(x, 1.0 - cdf)

    def pdf(self, x):
        xa = np.asarray(x, dtype=float)
        slopes = np.diff(self._c) / np.diff(self._x)
        idx = np.clip(np.searchsorted(self._x, xa, side="right") - 1, 0, slopes.size - 1)
        inside = (xa >= self._x[0]) & (xa < self._x[-1])
        return _out(x, np.where(inside, slopes[idx], 0.0))

    def continuous_pieces(self):
        return tuple((float(a), float(b)) for a, b in zip(self._x[:-1], self._x[1:]))

    def piece_mass(self, a, b):
        return float(np.interp(b, self._x, self._c) - np.interp(a, self._x, self._c))


class CallableOffer(OfferLaw):
    """Law defined through an allocation (survival) function A on [lo, hi).

    The density is -A', taken from ``dsurvival`` when supplied and from
    central differences otherwise. Mass A(0) - 1 sits on the null offer and
    any mass left at ``hi`` becomes an atom there.
    """

    def __init__(self, survival_fn, lo=0.0, hi=math.inf, dsurvival=None, knots=()):
        self._A = survival_fn
        self._dA = dsurvival
        self.lo = float(lo)
        self.hi = float(hi)
        self._knots = tuple(float(k) for k in knots if lo < k < hi)
        self.decline_mass = float(1.0 - survival_fn(self.lo))
        tail = 0.0 if not math.isfinite(self.hi) else float(survival_fn(self.hi))
        self.atoms = ((self.hi, tail),) if tail > 1e-15 else ()

    def survival(self, x):
        xa = np.asarray(x, dtype=float)
        vals = _apply(self._A, np.clip(xa, self.lo, self.hi if math.isfinite(self.hi) else None))
        out = np.where(xa < self.lo, 1.0 - self.decline_mass, vals)
        out = np.where(xa >= self.hi, 0.0, out)
        out = np.where(xa < 0, 1.0, out)
        return _out(x, out)

    def pdf(self, x):
        xa = np.asarray(x, dtype=float)
        if self._dA is not None:
            d = _apply(self._dA, xa)
        else:
            h = 1e-5 * np.maximum(1.0, np.abs(xa))
            d = (_apply(self._A, xa + h) - _apply(self._A, xa - h)) / (2 * h)
        inside = (xa > self.lo) & (xa < self.hi)
        return _out(x, np.where(inside, -d, 0.0))

    def continuous_pieces(self):
        edges = [self.lo, *self._knots, self.hi]
        return tuple(zip(edges[:-1], edges[1:]))


class MixtureOffer(OfferLaw):
    """Convex combination of offer laws."""

    def __init__(self, laws, weights):
        if len(laws) != len(weights) or min(weights) < 0 or abs(sum(weights) - 1) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to one")
        self.laws = tuple(laws)
        self.weights = tuple(float(w) for w in weights)
        self.decline_mass = sum(w * law.decline_mass for law, w in zip(laws, weights))
        merged = {}
        for law, w in zip(laws, weights):
            for p, m in law.atoms:
                merged[p] = merged.get(p, 0.0) + w * m
        self.atoms = tuple(sorted((p, m) for p, m in merged.items() if m > 0))

    def survival(self, x):
        return _out(x, sum(w * np.asarray(law.survival(x)) for law, w in zip(self.laws, self.weights)))

    def pdf(self, x):
        return _out(x, sum(w * np.asarray(law.pdf(x)) for law, w in zip(self.laws, self.weights)))

    def continuous_pieces(self):
        edges = set()
        for law, w in zip(self.laws, self.weights):
            if w > 0:
                for a, b in law.continuous_pieces():
                    edges.update((a, b))
        edges = sorted(edges)
        return tuple(zip(edges[:-1], edges[1:]))

    def piece_mass(self, a, b):
        return sum(w * law.piece_mass(max(a, la), min(b, lb))
                   for law, w in zip(self.laws, self.weights)
                   for la, lb in law.continuous_pieces() if min(b, lb) > max(a, la))


def mixture(g, g_hat, eps):
    """(1 - eps) G + eps G_hat."""
    return MixtureOffer((g, g_hat), (1.0 - eps, eps))


# --------------------------------------------------------------------------
# the optimal family


def _survival_tilde(prior, alpha, x):
    """sqrt(alpha f / (F + x f)); equals 1 - tilde_G."""
    x = np.asarray(x, dtype=float)
    f = np.asarray(prior.pdf(x))
    den = np.asarray(prior.cdf(x)) + x * f
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, f / den, np.inf)
    return np.sqrt(alpha * r)


def tilde_G(prior, alpha, x):
    """1 - sqrt(alpha f(x) / (F(x) + x f(x))); may be negative."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    f = float(prior.pdf(x))
    den = float(prior.cdf(x)) + x * f
    if den <= 0:
        raise DegenerateDenominator(f"F(x) + x f(x) vanishes at x={x}")
    return 1.0 - math.sqrt(alpha * f / den)


def tilde_g(prior, alpha, x):
    """Derivative of tilde_G: sqrt(alpha)(2f^2 - f'F) / (2 (F + x f)^{3/2} f^{1/2})."""
    x = np.asarray(x, dtype=float)
    f = np.asarray(prior.pdf(x))
    F = np.asarray(prior.cdf(x))
    fp = np.asarray(prior.dpdf(x))
    den = F + x * f
    with np.errstate(divide="ignore", invalid="ignore"):
        out = math.sqrt(alpha) * (2 * f * f - fp * F) / (2.0 * den**1.5 * np.sqrt(f))
    return np.where(f > 0, out, 0.0)


def K(prior, alpha, interval, x, jbar=None, level=None):
    """Ironing integral  int_x^jbar f/(1 - G~)^2 - f/(1 - level)^2 dy.

    ``jbar`` defaults to the raw interval's right end and ``level`` to
    tilde_G(jbar).
    """
    if jbar is None:
        jbar = interval.j
    if level is None:
        level = 1.0 - float(_survival_tilde(prior, alpha, jbar))
    flat = (1.0 - level) ** 2

    def integrand(y):
        f = float(prior.pdf(y))
        s = float(_survival_tilde(prior, alpha, y))
        first = f / (s * s) if s > 0 else (float(prior.cdf(y)) + y * f) / alpha
        return first - f / flat

    pts = [p for p in prior.knots if x < p < jbar]
    lo, hi = (x, jbar) if x <= jbar else (jbar, x)
    val, _ = integrate(integrand, lo, hi, points=pts, epsabs=1e-13, epsrel=1e-12)
    return val if x <= jbar else -val


@dataclass(frozen=True)
class IronedInterval:
    """Flat stretch [ibar, jbar) of the offer CDF at ``level``."""

    ibar: float
    jbar: float
    level: float
    raw: tuple = ()
    clamped_left: bool = False
    clamped_right: bool = False


def _gt(prior, alpha, x):
    return 1.0 - float(_survival_tilde(prior, alpha, x))


def _solve_level_point(prior, alpha, level, a, b):
    """x in [a, b] with tilde_G(x) = level, tilde_G increasing there; clamps."""
    ga, gb = _gt(prior, alpha, a), _gt(prior, alpha, b)
    if level <= ga:
        return a, True
    if level >= gb:
        return b, True
    return bisect(lambda t: _gt(prior, alpha, t) - level, a, b, xtol=1e-13), False


def _iron_group(prior, alpha, raws, left_limit, right_limit):
    i_left, j_right = raws[0].i, raws[-1].j
    grid = np.linspace(i_left, j_right, 257)
    vals = 1.0 - _survival_tilde(prior, alpha, grid)
    vals = vals[np.isfinite(vals)]
    lev_lo, lev_hi = float(np.min(vals)), float(np.max(vals))
    pad = 1e-12 * max(1.0, abs(lev_lo), abs(lev_hi))
    lev_lo, lev_hi = lev_lo - pad, lev_hi + pad

    def ends(level):
        a, ca = _solve_level_point(prior, alpha, level, left_limit, i_left)
        b, cb = _solve_level_point(prior, alpha, level, j_right, right_limit)
        return a, b, ca, cb

    def phi(level):
        a, b, _, _ = ends(level)
        return K(prior, alpha, raws[-1], a, jbar=b, level=level)

    if phi(lev_lo) < 0 or phi(lev_hi) > 0:
        raise NoConvergence("ironing level is not bracketed")
    level = bisect(phi, lev_lo, lev_hi, xtol=1e-14)
    a, b, ca, cb = ends(level)
    return IronedInterval(a, b, level, tuple(raws), ca, cb)


def iron(prior, alpha, raw):
    """Flatten the candidate CDF over each irregular stretch.

    Each group of raw intervals gets a level L with tilde_G(ibar) =
    tilde_G(jbar) = L and K(ibar) = 0 over [ibar, jbar]; groups whose flat
    stretches collide are merged and re-solved until nothing changes.

    Since 1 - tilde_G is proportional to sqrt(alpha), both conditions are
    free of alpha: the stretches are solved once at alpha = 1 and only the
    level is rescaled.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    unit = _iron_unit(prior, tuple(sorted(raw, key=lambda r: r.i)))
    root = math.sqrt(alpha)
    return [replace(it, level=1.0 - root * (1.0 - it.level)) for it in unit]


@functools.lru_cache(maxsize=256)
def _iron_unit(prior, raw):
    alpha = 1.0
    if not raw:
        return ()
    lo = prior.lo
    hi = prior.hi if prior.bounded else prior.effective_upper()
    groups = [[r] for r in raw]
    for _ in range(MERGE_LIMIT):
        solved = []
        for k, grp in enumerate(groups):
            left = groups[k - 1][-1].j if k > 0 else lo
            right = groups[k + 1][0].i if k + 1 < len(groups) else hi
            solved.append(_iron_group(prior, alpha, grp, left, right))
        merge_at = None
        for k in range(len(solved) - 1):
            cur, nxt = solved[k], solved[k + 1]
            if cur.clamped_right or nxt.clamped_left or nxt.ibar <= cur.jbar:
                merge_at = k
                break
        if merge_at is None:
            return tuple(solved)
        log.debug("merging ironed groups %d and %d", merge_at, merge_at + 1)
        groups[merge_at:merge_at + 2] = [groups[merge_at] + groups[merge_at + 1]]
    raise NoConvergence(f"ironing merge loop exceeded {MERGE_LIMIT} iterations")


class OfferDistribution(OfferLaw):
    """Optimal offer law for a prior and scale alpha.

    The CDF is 1 - sqrt(alpha f/(F + x f)) on ``smooth_pieces``, constant on
    ``flat_pieces``, equal to ``decline_mass`` below the first piece, and
    jumps at ``atoms``.
    """

    def __init__(self, prior, alpha, xbar, decline_mass, smooth_pieces, flat_pieces, atoms, notes=()):
        self.prior = prior
        self.alpha = float(alpha)
        self.xbar = float(xbar)
        self.decline_mass = float(decline_mass)
        self.smooth_pieces = tuple((float(a), float(b)) for a, b in smooth_pieces)
        self.flat_pieces = tuple((float(a), float(b), float(v)) for a, b, v in flat_pieces)
        self.atoms = tuple((float(p), float(m)) for p, m in atoms)
        self.notes = tuple(notes)
        starts = [a for a, _ in self.smooth_pieces] + [a for a, _, _ in self.flat_pieces]
        self._start = min(starts, default=math.inf)
        self._top = prior.hi

    def survival(self, x):
        xa = np.asarray(x, dtype=float)
        out = np.where(xa < 0, 1.0, 1.0 - self.decline_mass)
        for a, b, v in self.flat_pieces:
            out = np.where((xa >= a) & (xa < b), 1.0 - v, out)
        for a, b in self.smooth_pieces:
            sel = (xa >= a) & (xa < b)
            if np.any(sel):
                s = np.minimum(_survival_tilde(self.prior, self.alpha, np.where(sel, xa, a)), 1.0)
                out = np.where(sel, s, out)
        if math.isfinite(self._top):
            out = np.where(xa >= self._top, 0.0, out)
        return _out(x, out)

    def pdf(self, x):
        xa = np.asarray(x, dtype=float)
        out = np.zeros_like(xa)
        for a, b in self.smooth_pieces:
            sel = (xa >= a) & (xa < b)
            if np.any(sel):
                out = np.where(sel, tilde_g(self.prior, self.alpha, np.where(sel, xa, a)), out)
        return _out(x, out)

    def continuous_pieces(self):
        return self.smooth_pieces

    def knots(self):
        pts = set(super().knots())
        pts.update(k for k in self.prior.knots if math.isfinite(k))
        pts.add(self.xbar)
        for a, b, _ in self.flat_pieces:
            pts.update((a, b))
        return tuple(sorted(p for p in pts if math.isfinite(p)))

    @property
    def upper(self):
        return self._top

    def mass_defect(self):
        return abs(self.total_mass() - 1.0)

    def to_json(self):
        def fin(v):
            return v if math.isfinite(v) else None

        return {
            "alpha": self.alpha,
            "xbar": self.xbar,
            "decline_mass": self.decline_mass,
            "smooth_pieces": [{"lo": a, "hi": fin(b)} for a, b in self.smooth_pieces],
            "flat_pieces": [{"lo": a, "hi": b, "level": v} for a, b, v in self.flat_pieces],
            "atoms": [{"price": p, "mass": m} for p, m in self.atoms],
        }

    @classmethod
    def from_json(cls, data, prior):
        def inf(v):
            return math.inf if v is None else float(v)

        return cls(
            prior,
            data["alpha"],
            data["xbar"],
            data["decline_mass"],
            [(p["lo"], inf(p["hi"])) for p in data["smooth_pieces"]],
            [(p["lo"], p["hi"], p["level"]) for p in data["flat_pieces"]],
            [(p["price"], p["mass"]) for p in data["atoms"]],
        )


def _check_G(prior, alpha, ironed, x):
    """Ironed (pre-clamp) candidate CDF, continuous on the open support."""
    for it in ironed:
        if it.ibar <= x < it.jbar:
            return it.level
    return 1.0 - float(_survival_tilde(prior, alpha, x))


def build_offer_distribution(prior, alpha, grid_resolution=4096):
    """Assemble the optimal offer law: iron, truncate at xbar, book atoms."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    notes = []
    raw = find_irregular_intervals(prior, grid_resolution)
    ironed = iron(prior, alpha, raw)
    lo = prior.lo
    top = prior.hi
    hi_eff = top if prior.bounded else prior.effective_upper()

    def check(x):
        return _check_G(prior, alpha, ironed, x)

    at_lo = check(lo) if lo > 0 or (ironed and ironed[0].ibar <= lo) else -math.inf
    if at_lo >= 0:
        xbar = 0.0
    else:
        end = float(np.nextafter(top, -math.inf)) if prior.bounded else hi_eff
        if prior.bounded and check(end) < 0:
            raise DegenerateMechanism(
                f"alpha={alpha} puts the truncation point at or above the support top {top}"
            )
        while check(end) < 0:
            end *= 2.0
        xbar = bisect(check, lo, end, xtol=1e-13)
    start = max(lo, xbar)
    flats = []
    for it in ironed:
        if it.level < 0:
            notes.append(f"dropped ironed stretch [{it.ibar}, {it.jbar}) below the truncation point")
            continue
        if it.ibar < xbar < it.jbar:
            notes.append(f"ironed stretch [{it.ibar}, {it.jbar}) straddles the truncation point")
        flats.append((max(it.ibar, start), it.jbar, it.level))
    decline = max(at_lo, 0.0) if xbar == 0.0 else 0.0
    smooth = []
    cursor = start
    for a, b, _ in flats:
        if a > cursor:
            smooth.append((cursor, a))
        cursor = max(cursor, b)
    end = top if prior.bounded else math.inf
    if cursor < end:
        smooth.append((cursor, end))
    atoms = []
    if prior.bounded:
        if flats and flats[-1][1] >= top:
            below_top = flats[-1][2]
        else:
            # left limit of the candidate at the support top
            f_top = float(prior.pdf(top))
            below_top = 1.0 - math.sqrt(alpha * f_top / (1.0 + top * f_top))
        mass = 1.0 - max(below_top, 0.0)
        if mass > 1e-15:
            atoms.append((top, mass))
    for note in notes:
        log.info(note)
    return OfferDistribution(prior, alpha, xbar, decline, smooth, flats, atoms, notes)
