import math

import numpy as np
import pytest
from conftest import double_sigmoid, steep_sigmoid
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from surveymech.errors import NonFiniteDerivative
from surveymech.prior import (
    IrregularInterval,
    PriorSpec,
    eval as prior_eval,
    find_irregular_intervals,
    regularity_gap,
    sample_cost,
)

BUILTIN = [
    PriorSpec.exponential(1.0),
    PriorSpec.exponential(2.5),
    PriorSpec.uniform(1.0, 2.0),
    PriorSpec.lognormal(0.0, 0.5),
    steep_sigmoid(),
    double_sigmoid(),
]


def test_eval_exponential_closed_form(exponential):
    f, F, fp = prior_eval(exponential, 1.0)
    assert f == pytest.approx(math.exp(-1), rel=1e-14)
    assert F == pytest.approx(1 - math.exp(-1), rel=1e-14)
    assert fp == pytest.approx(-math.exp(-1), rel=1e-14)


def test_eval_uniform_and_off_support(uniform, exponential):
    assert prior_eval(uniform, 1.5) == (1.0, 0.5, 0.0)
    assert prior_eval(uniform, 0.5) == (0.0, 0.0, 0.0)
    assert prior_eval(uniform, 3.0) == (0.0, 1.0, 0.0)
    assert prior_eval(exponential, -0.5) == (0.0, 0.0, 0.0)


def test_eval_rejects_breakpoints(sigmoid):
    with pytest.raises(NonFiniteDerivative):
        prior_eval(sigmoid, 2.0)
    f, F, _ = prior_eval(sigmoid, 2.0 + 1e-9)
    assert f > 0 and 0 < F < 1


def test_sample_cost_inverse_cdf(uniform, exponential):
    class Fixed:
        def __init__(self, u):
            self.u = u

        def random(self, size=None):
            return self.u if size is None else np.full(size, self.u)

    assert sample_cost(uniform, Fixed(0.25)) == pytest.approx(1.25)
    assert sample_cost(exponential, Fixed(0.5)) == pytest.approx(math.log(2), rel=1e-14)


def test_sample_cost_mean_exponential(exponential):
    draws = sample_cost(exponential, np.random.default_rng(0), 10**6)
    assert abs(draws.mean() - 1.0) <= 0.005


@pytest.mark.parametrize("prior", BUILTIN, ids=lambda p: p.kind)
def test_samples_match_cdf(prior):
    draws = sample_cost(prior, np.random.default_rng(1), 10**5)
    assert stats.kstest(draws, prior.cdf).statistic <= 0.01


@pytest.mark.parametrize("prior", BUILTIN, ids=lambda p: p.kind)
def test_density_and_slope_match_numeric_derivatives(prior):
    rng = np.random.default_rng(2)
    top = prior.hi if prior.bounded else prior.effective_upper(1e-6)
    xs = rng.uniform(prior.lo, top, 1000)
    knots = np.asarray(prior.knots)
    for x in xs:
        h = 1e-5 * max(1.0, x)
        if np.any(np.abs(knots - x) <= 2 * h) or x - h < 0:
            continue
        dF = (prior.cdf(x + h) - prior.cdf(x - h)) / (2 * h)
        df = (prior.pdf(x + h) - prior.pdf(x - h)) / (2 * h)
        assert abs(dF - prior.pdf(x)) <= 1e-6
        assert abs(df - prior.dpdf(x)) <= 1e-5 * max(1.0, abs(prior.dpdf(x)))


@pytest.mark.parametrize("prior", BUILTIN, ids=lambda p: p.kind)
def test_cdf_is_valid(prior):
    top = prior.hi if prior.bounded else prior.effective_upper()
    xs = np.linspace(0, top * 1.1, 5001)
    F = prior.cdf(xs)
    assert np.all(np.diff(F) >= -1e-15)
    assert prior.cdf(prior.lo) == pytest.approx(0.0, abs=1e-15)
    assert prior.cdf(top) == pytest.approx(1.0, abs=1e-11)
    assert np.all(prior.pdf(xs) >= 0)
    assert prior.pdf(top * 1.2 if prior.bounded else -1.0) == 0.0


def test_regularity_gap_examples(exponential, uniform, sigmoid):
    assert regularity_gap(exponential, 1.0) == pytest.approx(math.exp(-2) + math.exp(-1), rel=1e-12)
    assert regularity_gap(exponential, 1.0) == pytest.approx(0.503215, abs=1e-6)
    assert regularity_gap(uniform, 1.5) == 2.0
    xs = np.linspace(2.0, 2.1, 101)[1:-1]
    assert np.min(regularity_gap(sigmoid, xs)) < 0


@given(st.floats(0.0, 30.0))
def test_exponential_gap_positive(x):
    assert regularity_gap(PriorSpec.exponential(1.0), x) > 0


def test_no_irregular_intervals_on_regular_priors(exponential, uniform, lognormal):
    assert find_irregular_intervals(exponential) == ()
    assert find_irregular_intervals(uniform) == ()
    assert find_irregular_intervals(lognormal) == ()


def test_sigmoid_has_one_irregular_interval(sigmoid):
    (iv,) = find_irregular_intervals(sigmoid)
    assert 2.0 < iv.i < iv.j < 2.1
    for x in (iv.i, iv.j):
        assert abs(regularity_gap(sigmoid, x)) <= 1e-8


@pytest.mark.parametrize("prior", BUILTIN, ids=lambda p: p.kind)
def test_intervals_sorted_disjoint_inside_support(prior):
    ivs = find_irregular_intervals(prior)
    for iv in ivs:
        assert prior.lo < iv.i < iv.j < prior.hi
    for a, b in zip(ivs, ivs[1:]):
        assert a.j < b.i


def test_double_sigmoid_has_two_intervals():
    assert len(find_irregular_intervals(double_sigmoid())) == 2


def test_irregular_interval_requires_order():
    with pytest.raises(ValueError):
        IrregularInterval(2.0, 1.0)


def test_piecewise_constructor_validation():
    with pytest.raises(ValueError, match="negative"):
        PriorSpec.piecewise_polynomial([0, 1], [[1.0, -1.5]])
    with pytest.raises(ValueError, match="continuous"):
        PriorSpec.piecewise_polynomial([0, 1, 2], [[1.0], [2.0]])
    with pytest.raises(ValueError):
        PriorSpec.piecewise_polynomial([1, 0], [[1.0]])
    p = PriorSpec.piecewise_polynomial([0, 2], [[3.0]])
    assert p.pdf(1.0) == pytest.approx(0.5)


@pytest.mark.parametrize("prior", BUILTIN, ids=lambda p: p.kind)
def test_json_round_trip(prior):
    again = PriorSpec.from_json(prior.to_json())
    xs = np.linspace(0, 5, 37)
    assert np.allclose(again.cdf(xs), prior.cdf(xs), atol=1e-15)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        PriorSpec.exponential(0.0)
    with pytest.raises(ValueError):
        PriorSpec.uniform(2.0, 1.0)
    with pytest.raises(ValueError):
        PriorSpec.lognormal(0.0, -1.0)
    with pytest.raises(ValueError):
        PriorSpec.from_json({"kind": "cauchy"})


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.01, 0.99))
def test_ppf_inverts_cdf(rate, u):
    p = PriorSpec.exponential(rate)
    assert p.cdf(p.ppf(u)) == pytest.approx(u, rel=1e-12)
