import math

import numpy as np
import pytest

from surveymech.errors import ZeroSurvivalWeight
from surveymech.estimators import (
    PopulationSpec,
    ResponseModel,
    ht_estimate,
    linear_multiplier,
    simulate,
    tilde_estimate,
    worst_case_population,
)
from surveymech.functionals import expected_cost, vstar
from surveymech.mechanism import Transaction
from surveymech.offer import DiscreteOffer, build_offer_distribution


def accepted(cost, q, price=None):
    price = cost if price is None else price
    return Transaction(cost, price, True, price, q)


def declined(cost):
    return Transaction(cost, 0.0, False, 0.0, None)


def test_ht_sample_mean_when_everyone_accepts():
    law = DiscreteOffer.point_mass(5.0)
    rows = [accepted(c, q, 5.0) for c, q in [(1, 1), (2, 0), (3, 1), (4, 1)]]
    assert ht_estimate(rows, law, 4) == pytest.approx(0.75)
    assert tilde_estimate(rows, law, 4) == pytest.approx(-0.5)
    zeros = [accepted(c, 0, 5.0) for c in (1, 2)]
    assert tilde_estimate(zeros, law, 2) == 1.0


def test_ht_reweights_by_acceptance():
    law = DiscreteOffer(((1.0, 0.5), (2.0, 0.5)))
    rows = [accepted(1.5, 1, 2.0), declined(1.5)]
    assert ht_estimate(rows, law, 2) == pytest.approx(1.0)
    assert linear_multiplier(law, 1.5, 2) == pytest.approx(1.0)


def test_zero_weight_is_an_error():
    law = DiscreteOffer.point_mass(1.0)
    with pytest.raises(ZeroSurvivalWeight):
        ht_estimate([accepted(2.0, 1, 2.0)], law, 1)


def test_response_models():
    assert ResponseModel.constant(0.3)(np.array([1.0, 2.0])).tolist() == [0.3, 0.3]
    lin = ResponseModel.linear(0.1, 0.2)
    assert lin(10.0) == 1.0 and lin(1.0) == pytest.approx(0.3)
    logi = ResponseModel.logistic(1.0, 2.0)
    assert logi(2.0) == pytest.approx(0.5)
    tab = ResponseModel.table([1, 2], [0.2, 0.6])
    assert tab(1.5) == pytest.approx(0.4)
    assert ResponseModel.from_json(tab.to_json())(1.5) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        ResponseModel.constant(1.5)


def test_worst_case_populations(uniform):
    pop = worst_case_population(uniform)
    assert pop.response(np.linspace(1, 2, 5)).tolist() == [1.0] * 5
    assert pop.expected_q() == pytest.approx(1.0)
    assert worst_case_population(uniform, "tilde").expected_q() == pytest.approx(0.5)
    with pytest.raises(ValueError):
        worst_case_population(uniform, "other")


def test_point_mass_offer_reduces_to_sample_mean(uniform):
    pop = PopulationSpec(uniform, ResponseModel.linear(-0.5, 0.6))
    rep = simulate(pop, DiscreteOffer.point_mass(2.0), 20, 20_000, seed=3)
    assert rep.acceptance_rate == 1.0
    assert abs(rep.mean_estimate - pop.expected_q()) <= 4 * rep.se_mean_estimate


def test_sandwich_and_cost_on_uniform(uniform):
    d = build_offer_distribution(uniform, 0.25)
    n = 50
    rep = simulate(worst_case_population(uniform), d, n, 100_000, seed=1, threads=4)
    nv = n * vstar(uniform, d, n).value
    assert rep.n_vstar == pytest.approx(nv)
    assert nv - 1 - 4 * rep.se_var_times_n <= rep.var_times_n <= nv + 4 * rep.se_var_times_n
    assert rep.sandwich_ok and rep.unbiased_ok
    want = expected_cost(uniform, d, n).value
    assert abs(rep.mean_total_cost - want) <= 4 * rep.se_mean_total_cost


def test_tilde_variance_hits_vstar(exponential):
    d = build_offer_distribution(exponential, 0.5)
    n = 20
    rep = simulate(worst_case_population(exponential, "tilde"), d, n, 100_000, seed=2)
    nv = n * vstar(exponential, d, n).value
    assert abs(rep.tilde_var_times_n - nv) <= 4 * rep.se_tilde_var_times_n
    assert abs(rep.mean_tilde) <= 4 * rep.se_mean_tilde


@pytest.mark.parametrize("name", ["exponential", "uniform", "lognormal", "sigmoid"])
def test_unbiased_on_all_fixtures(name, request):
    prior = request.getfixturevalue(name)
    d = build_offer_distribution(prior, 0.4)
    pop = PopulationSpec(prior, ResponseModel.logistic(1.0, float(prior.ppf(0.5))))
    rep = simulate(pop, d, 10, 20_000, seed=5)
    assert rep.unbiased_ok
    assert abs(rep.mean_estimate - rep.expected_q) <= 4 * rep.se_mean_estimate


def test_worst_case_dominates_random_models(uniform):
    d = build_offer_distribution(uniform, 0.25)
    n, trials = 10, 20_000
    worst = simulate(worst_case_population(uniform), d, n, trials, seed=8)
    rng = np.random.default_rng(12)
    for _ in range(10):
        model = ResponseModel.linear(float(rng.uniform(0, 1)), float(rng.uniform(-0.5, 0.5)))
        other = simulate(PopulationSpec(uniform, model), d, n, trials, seed=8)
        slack = 4 * math.hypot(worst.se_var_times_n, other.se_var_times_n)
        assert worst.var_times_n >= other.var_times_n - slack


def test_seed_determinism_across_threads(exponential):
    d = build_offer_distribution(exponential, 0.3)
    pop = worst_case_population(exponential)
    a = simulate(pop, d, 7, 9_000, seed=99, threads=1, block=1000)
    b = simulate(pop, d, 7, 9_000, seed=99, threads=3, block=1000)
    assert a.to_json() == b.to_json()
    c = simulate(pop, d, 7, 9_000, seed=100, threads=1, block=1000)
    assert c.mean_estimate != a.mean_estimate


def test_report_serialisation(exponential):
    rep = simulate(worst_case_population(exponential), build_offer_distribution(exponential, 0.3), 5, 100, seed=0)
    header, row = rep.to_csv().strip().split("\n")
    assert header.split(",")[0] == "trials" and row.split(",")[0] == "100"
    assert 0 <= rep.acceptance_rate <= 1
    with pytest.raises(ValueError):
        simulate(worst_case_population(exponential), build_offer_distribution(exponential, 0.3), 5, 1)
