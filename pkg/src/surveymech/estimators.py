"""Inverse-probability estimators, synthetic populations and the survey simulator."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InfiniteVariance, ZeroSurvivalWeight
from .functionals import vstar
from .prior import sample_cost
from .quadrature import integrate

log = logging.getLogger(__name__)

BLOCK = 2000


# ------------------------------------------------------------ populations
class ResponseModel:
    """Pr[q = 1 | cost], vectorised."""

    def __init__(self, fn, kind, params):
        self._fn = fn
        self.kind = kind
        self.params = dict(params)

    def __call__(self, c):
        out = np.clip(np.asarray(self._fn(np.asarray(c, dtype=float)), dtype=float), 0.0, 1.0)
        return float(out) if np.ndim(c) == 0 else np.broadcast_to(out, np.shape(c)).copy()

    def to_json(self):
        return {"kind": self.kind, **self.params}

    @classmethod
    def constant(cls, p):
        if not 0.0 <= p <= 1.0:
            raise ValueError("probability must lie in [0, 1]")
        return cls(lambda c: np.full(np.shape(c), float(p)), "constant", {"p": p})

    @classmethod
    def linear(cls, intercept, slope):
        """intercept + slope * c, clipped to [0, 1]."""
        return cls(lambda c: intercept + slope * c, "linear", {"intercept": intercept, "slope": slope})

    @classmethod
    def logistic(cls, scale, midpoint):
        """1 / (1 + exp(-scale (c - midpoint)))."""
        return cls(
            lambda c: 0.5 * (1.0 + np.tanh(0.5 * scale * (c - midpoint))),
            "logistic",
            {"scale": scale, "midpoint": midpoint},
        )

    @classmethod
    def table(cls, costs, probs):
        c = np.asarray(costs, dtype=float)
        p = np.asarray(probs, dtype=float)
        if c.shape != p.shape or c.ndim != 1 or np.any(np.diff(c) <= 0):
            raise ValueError("table needs strictly increasing costs and matching probabilities")
        if np.any((p < 0) | (p > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        return cls(lambda x: np.interp(x, c, p), "table", {"costs": c.tolist(), "probs": p.tolist()})

    @classmethod
    def from_json(cls, data):
        data = dict(data)
        kind = data.pop("kind")
        if kind == "worst_case":
            return cls.constant(1.0)
        builders = {"constant": cls.constant, "linear": cls.linear, "logistic": cls.logistic, "table": cls.table}
        if kind not in builders:
            raise ValueError(f"unknown response model {kind!r}")
        return builders[kind](**data)


@dataclass(frozen=True)
class PopulationSpec:
    prior: object
    response: ResponseModel
    name: str = "custom"

    def expected_q(self):
        v, _ = integrate(
            lambda c: float(self.response(c)) * float(self.prior.pdf(c)),
            self.prior.lo,
            self.prior.hi,
            points=[k for k in self.prior.knots if math.isfinite(k)],
        )
        return v

    def sample(self, rng, size):
        c = np.asarray(sample_cost(self.prior, rng, size), dtype=float)
        q = (rng.random(size) < self.response(c)).astype(np.int8)
        return c, q


def worst_case_population(prior, estimator="ht"):
    """Population maximising the estimator's variance for every offer law.

    For the plain estimator this is q = 1 everywhere. The signed estimator
    has second moment int f/A whatever q is, so its variance is largest
    when E[q] = 1/2; q is then an independent fair coin.
    """
    if estimator == "ht":
        return PopulationSpec(prior, ResponseModel.constant(1.0), "worst_case")
    if estimator == "tilde":
        return PopulationSpec(prior, ResponseModel.constant(0.5), "worst_case_tilde")
    raise ValueError(f"unknown estimator {estimator!r}")


# ------------------------------------------------------------- estimators
def _weights(costs, dist):
    a = np.asarray(dist.accept_prob(np.asarray(costs, dtype=float)), dtype=float)
    if np.any(a <= 0):
        raise ZeroSurvivalWeight("an accepted record has zero acceptance probability")
    return 1.0 / a


def _accepted(transactions):
    acc = [t for t in transactions if t.accepted]
    return np.asarray([t.cost for t in acc], dtype=float), np.asarray([t.response for t in acc], dtype=float)


def ht_estimate(transactions, dist, n):
    """(1/n) sum of q / A(c) over accepted records."""
    if n < 1:
        raise ValueError("n must be positive")
    c, q = _accepted(transactions)
    if c.size == 0:
        return 0.0
    return float(np.sum(q * _weights(c, dist))) / n


def tilde_estimate(transactions, dist, n):
    """(1/n) sum of (-1)^q / A(c) over accepted records; estimates 1 - 2 E[q]."""
    if n < 1:
        raise ValueError("n must be positive")
    c, q = _accepted(transactions)
    if c.size == 0:
        return 0.0
    return float(np.sum((1.0 - 2.0 * q) * _weights(c, dist))) / n


def linear_multiplier(dist, cost, n):
    """beta(c) = 1 / (n A(c))."""
    return 1.0 / (n * float(dist.accept_prob(cost)))


# ------------------------------------------------------------- simulation
@dataclass
class SimulationReport:
    trials: int
    n: int
    seed: int
    expected_q: float
    mean_estimate: float
    se_mean_estimate: float
    var_times_n: float
    se_var_times_n: float
    mean_tilde: float
    se_mean_tilde: float
    tilde_var_times_n: float
    se_tilde_var_times_n: float
    mean_total_cost: float
    se_mean_total_cost: float
    acceptance_rate: float
    se_acceptance_rate: float
    n_vstar: float | None = None
    sandwich_ok: bool | None = None
    unbiased_ok: bool | None = None

    def to_json(self):
        return asdict(self)

    def to_csv(self):
        buf = io.StringIO()
        row = self.to_json()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(list(row))
        out.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row.values()])
        return buf.getvalue()


def _run_block(pop, dist, n, size, seed, block):
    rng = np.random.default_rng(np.random.SeedSequence([seed, block]))
    c, q = pop.sample(rng, (size, n))
    price = np.asarray(dist.sample(rng, (size, n)))
    take = c <= price
    w = np.zeros_like(c)
    if np.any(take):
        w[take] = _weights(c[take], dist)
    ht = np.sum(q * w, axis=1) / n
    tilde = np.sum((1.0 - 2.0 * q) * w, axis=1) / n
    paid = np.sum(np.where(take, price, 0.0), axis=1)
    rate = np.mean(take, axis=1)
    return ht, tilde, paid, rate


def _mean_se(x):
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf


def _var_se(x):
    """Sample variance and its standard error from the fourth central moment."""
    m = x.size
    dev = x - np.mean(x)
    s2 = float(np.sum(dev**2) / (m - 1))
    m4 = float(np.mean(dev**4))
    return s2, math.sqrt(max(m4 - s2 * s2 * (m - 3) / (m - 1), 0.0) / m)


def simulate(pop, dist, n, trials, seed=0, threads=1, block=BLOCK):
    """Run ``trials`` independent surveys of ``n`` truthful individuals.

    Trials are drawn in fixed blocks, each seeded from (seed, block index),
    so the report does not depend on ``threads``.
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    if n < 1:
        raise ValueError("n must be positive")
    if threads < 1:
        raise ValueError("threads must be positive")
    sizes = [min(block, trials - start) for start in range(0, trials, block)]
    jobs = [(pop, dist, n, size, seed, k) for k, size in enumerate(sizes)]
    if threads == 1:
        parts = [_run_block(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: _run_block(*job), jobs))
    ht, tilde, paid, rate = (np.concatenate(col) for col in zip(*parts))
    eq = pop.expected_q()
    m_ht, se_ht = _mean_se(ht)
    v_ht, se_v = _var_se(ht)
    m_t, se_t = _mean_se(tilde)
    v_t, se_vt = _var_se(tilde)
    m_c, se_c = _mean_se(paid)
    m_r, se_r = _mean_se(rate)
    report = SimulationReport(
        trials, n, seed, eq, m_ht, se_ht, n * v_ht, n * se_v, m_t, se_t, n * v_t, n * se_vt, m_c, se_c, m_r, se_r
    )
    report.unbiased_ok = abs(m_ht - eq) <= 4 * se_ht and abs(m_t - (1 - 2 * eq)) <= 4 * se_t
    try:
        nv = n * vstar(pop.prior, dist, n).value
    except (InfiniteVariance, AttributeError, TypeError):
        nv = None
    if nv is not None:
        report.n_vstar = nv
        report.sandwich_ok = nv - 1 - 4 * report.se_var_times_n <= report.var_times_n <= nv + 4 * report.se_var_times_n
    return report
