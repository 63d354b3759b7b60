"""End-to-end acceptance checks, one test per criterion.

Each test times itself, records a PASS/FAIL line (printed in the terminal
summary by conftest) and then asserts both the numerical check and the
runtime budget.
"""

import csv
import json
import time

import numpy as np
from conftest import ACCEPTANCE_LINES, double_sigmoid, steep_sigmoid, uniform_vstar

from surveymech.cli import main
from surveymech.errors import NoFiniteOptimum
from surveymech.estimators import PopulationSpec, ResponseModel, simulate, worst_case_population
from surveymech.functionals import (
    certificate,
    expected_cost,
    gateaux_cost,
    gateaux_vstar,
    vstar,
)
from surveymech.mechanism import check_truthful_ir, example_lottery, paid_above, tioli_violations, to_tioli
from surveymech.offer import build_offer_distribution, mixture
from surveymech.optimizer import (
    Objective,
    solve_budget,
    solve_convex,
    solve_variable_n,
    solve_variance,
    stationarity_residual,
)
from surveymech.oracle import GridProblem, enumerate_toy, grid_optimize
from surveymech.prior import PriorSpec


def record(number, title, checks, elapsed, budget):
    """Log one line per criterion and fail on the first broken check."""
    ok = all(passed for _, passed in checks) and elapsed < budget
    detail = "; ".join(f"{text}{'' if passed else ' [X]'}" for text, passed in checks)
    line = f"{'PASS' if ok else 'FAIL'}  {number:2d}. {title} ({elapsed:.2f}s of {budget}s): {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    for text, passed in checks:
        assert passed, text
    assert elapsed < budget, f"took {elapsed:.2f}s, budget {budget}s"


def fixtures():
    return {
        "exponential": PriorSpec.exponential(1.0),
        "uniform": PriorSpec.uniform(1.0, 2.0),
        "lognormal": PriorSpec.lognormal(0.0, 0.5),
        "sigmoid": steep_sigmoid(),
        "double_sigmoid": double_sigmoid(),
    }


def test_criterion_01_truthfulness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    c, r, p = rng.uniform(0, 10, (3, 10**4))
    bad = tioli_violations(c, r, p).size
    grid = np.linspace(1, 10, 91)
    rep = check_truthful_ir(example_lottery(), grid, grid)
    elapsed = time.perf_counter() - t0
    record(
        1,
        "truthfulness and individual rationality",
        [
            (f"{bad} violations in 10^4 random triples", bad == 0),
            (f"lottery example: {len(rep.violations)} violations on a 91x91 grid", rep.passed),
        ],
        elapsed,
        1,
    )


def test_criterion_02_conversion():
    t0 = time.perf_counter()
    mech = example_lottery()
    law = to_tioli(mech)
    xs = np.linspace(1, 10, 1000)
    surv_err = float(np.max(np.abs(law.survival(xs) - 1 / xs**2)))
    ap = mech.A(xs) * mech.P(xs)
    pay_err = float(np.max(np.abs(paid_above(law, xs) / ap - 1)))
    elapsed = time.perf_counter() - t0
    record(
        2,
        "conversion to a posted-price lottery",
        [
            (f"survival error {surv_err:.1e} (tol 1e-6)", surv_err <= 1e-6),
            (f"A*P relative error {pay_err:.1e} (tol 1e-5)", pay_err <= 1e-5),
        ],
        elapsed,
        1,
    )


def test_criterion_03_unbiasedness():
    t0 = time.perf_counter()
    toy = enumerate_toy([1.0, 2.0, 3.0], [1, 0, 1], [(1.5, 0.4), (3.0, 0.6)])
    checks = [
        (f"toy |E[S]-E[q]| = {abs(toy.mean_ht - toy.expected_q):.1e}", abs(toy.mean_ht - toy.expected_q) <= 1e-12),
        (
            f"toy |E[S~]-(1-2E[q])| = {abs(toy.mean_tilde - (1 - 2 * toy.expected_q)):.1e}",
            abs(toy.mean_tilde - (1 - 2 * toy.expected_q)) <= 1e-12,
        ),
    ]
    for k, (name, prior) in enumerate(fixtures().items()):
        d = build_offer_distribution(prior, 0.4)
        pop = PopulationSpec(prior, ResponseModel.logistic(2.0, float(prior.ppf(0.5))))
        rep = simulate(pop, d, 10, 10**5, seed=300 + k, threads=4)
        z = abs(rep.mean_estimate - rep.expected_q) / rep.se_mean_estimate
        checks.append((f"{name} z = {z:.2f}", z <= 4))
    record(3, "unbiasedness", checks, time.perf_counter() - t0, 30)


def test_criterion_04_variance_sandwich():
    t0 = time.perf_counter()
    prior = PriorSpec.uniform(1.0, 2.0)
    d = build_offer_distribution(prior, 0.25)
    n, trials = 50, 10**5
    nv = n * vstar(prior, d, n).value
    ht = simulate(worst_case_population(prior), d, n, trials, seed=4, threads=4)
    tilde = simulate(worst_case_population(prior, "tilde"), d, n, trials, seed=5, threads=4)
    lo, hi = nv - 1 - 4 * ht.se_var_times_n, nv + 4 * ht.se_var_times_n
    z_tilde = abs(tilde.tilde_var_times_n - nv) / tilde.se_tilde_var_times_n
    # under q = 1 the signed estimator's variance is nV* - 1, the bottom of the sandwich
    z_ones = abs(ht.tilde_var_times_n - (nv - 1)) / ht.se_tilde_var_times_n
    record(
        4,
        "variance sandwich",
        [
            (f"HT n*Var {ht.var_times_n:.4f} in [{lo:.4f}, {hi:.4f}]", lo <= ht.var_times_n <= hi),
            (f"signed n*Var {tilde.tilde_var_times_n:.4f} vs n*V* {nv:.4f}, z = {z_tilde:.2f}", z_tilde <= 4),
            (f"signed n*Var with q = 1 is n*V* - 1 (z = {z_ones:.2f})", z_ones <= 4),
        ],
        time.perf_counter() - t0,
        60,
    )


def test_criterion_05_closed_form():
    t0 = time.perf_counter()
    prior = PriorSpec.uniform(1.0, 2.0)
    checks = []
    for a in (0.04, 0.25, 1.0):
        got = vstar(prior, build_offer_distribution(prior, a), 1).value
        err = abs(got / uniform_vstar(a) - 1)
        checks.append((f"alpha={a}: rel err {err:.1e}", err <= 1e-8))
    record(5, "closed-form uniform fixture", checks, time.perf_counter() - t0, 1)


def _second_order(fun, g, g_hat, eps):
    base = fun(g)
    one = (fun(mixture(g, g_hat, eps)) - base) / eps
    half = (fun(mixture(g, g_hat, eps / 2)) - base) / (eps / 2)
    return 2 * half - one


def test_criterion_06_gateaux():
    t0 = time.perf_counter()
    rng = np.random.default_rng(66)
    priors = [PriorSpec.exponential(1.0), PriorSpec.uniform(1.0, 2.0), PriorSpec.lognormal(0.0, 0.5)]
    worst_c = worst_v = 0.0
    n = 3
    for k in range(20):
        prior = priors[k % 3]
        a1, a2 = np.exp(rng.uniform(np.log(0.02), np.log(1.0), 2))
        g, g_hat = build_offer_distribution(prior, a1), build_offer_distribution(prior, a2)
        eps = 1e-4
        fc = _second_order(lambda law: expected_cost(prior, law, n).value, g, g_hat, eps)
        fv = _second_order(lambda law: vstar(prior, law, n).value, g, g_hat, eps)
        worst_c = max(worst_c, abs(fc / gateaux_cost(prior, g, g_hat, n) - 1))
        worst_v = max(worst_v, abs(fv / gateaux_vstar(prior, g, g_hat, n) - 1))
    record(
        6,
        "first variations vs finite differences",
        [
            (f"cost: worst rel err {worst_c:.1e} over 20 pairs", worst_c <= 1e-3),
            (f"vstar: worst rel err {worst_v:.1e} over 20 pairs", worst_v <= 1e-3),
        ],
        time.perf_counter() - t0,
        10,
    )


def test_criterion_07_certificate():
    t0 = time.perf_counter()
    cases = {
        "exponential": (PriorSpec.exponential(1.0), 20, 10.0, 0.1),
        "uniform": (PriorSpec.uniform(1.0, 2.0), 20, 25.0, 0.1),
        "sigmoid": (steep_sigmoid(), 10, 15.0, 0.3),
    }
    checks = []
    for name, (prior, n, budget, vmax) in cases.items():
        for design in (solve_budget(prior, n, budget), solve_variance(prior, n, vmax)):
            cert = design.certificate
            off = certificate(prior, design.dist, n, lam=2 * design.lam)
            checks.append(
                (
                    f"{name} alpha={design.alpha:.4g}: deviation {cert.max_flatness_deviation / cert.scale:.1e} rel, "
                    f"slack {cert.min_off_support_slack:.2e}, 2*lambda fails",
                    cert.passed and not off.passed,
                )
            )
        if name == "sigmoid":
            for a, b, ha, hb, inside in design.certificate.ironed:
                gap = abs(ha - hb) / design.certificate.scale
                checks.append((f"ironed [{a:.4f}, {b:.4f}]: |H(i)-H(j)| {gap:.1e} rel", gap <= 1e-6))
            checks.append(("sigmoid design has an ironed stretch", bool(design.certificate.ironed)))
    record(7, "optimality certificate", checks, time.perf_counter() - t0, 30)


def test_criterion_08_grid_oracle():
    t0 = time.perf_counter()
    checks = []
    for prior in (PriorSpec.uniform(1.0, 2.0), PriorSpec.exponential(1.0)):
        d = build_offer_distribution(prior, 0.25)
        budget = expected_cost(prior, d, 1).value
        exact = vstar(prior, d, 1).value
        gaps = []
        for points in (200, 400):
            sol = grid_optimize(GridProblem.from_prior(prior, budget, 1, points=points))
            gaps.append(sol.objective / exact - 1)
        checks.append((f"{prior.kind}: gap {gaps[0]:.2e} at 200 points", abs(gaps[0]) <= 0.01))
        checks.append((f"{prior.kind}: gap {gaps[1]:.2e} at 400 points", abs(gaps[1]) < abs(gaps[0])))
    record(8, "grid oracle", checks, time.perf_counter() - t0, 60)


def test_criterion_09_round_trips():
    t0 = time.perf_counter()
    expo, unif = PriorSpec.exponential(1.0), PriorSpec.uniform(1.0, 2.0)
    a = solve_budget(expo, 50, 20.0)
    b = solve_variance(expo, 50, a.vstar)
    dual = abs(b.cost / 20.0 - 1)
    phi = Objective.quadratic()
    conv = stationarity_residual(phi, solve_convex(expo, 5, phi))
    var_n = solve_variable_n(unif, 1.0, budget=200.0)
    trade = abs(var_n.problem["tradeoff_residual"])
    met = abs(var_n.cost / 200.0 - 1)
    try:
        solve_variable_n(expo, 0.0, budget=100.0)
        raised = False
    except NoFiniteOptimum:
        raised = True
    record(
        9,
        "solver round trips",
        [
            (f"budget/variance duality rel err {dual:.1e}", dual <= 1e-4),
            (f"convex stationarity residual {conv:.1e}", conv <= 1e-6),
            (f"variable n: trade-off residual {trade:.1e}, n={var_n.n}, budget rel err {met:.1e}", trade <= 1e-8 and met <= 1e-6),
            ("free recruits on exponential raise NoFiniteOptimum", raised),
        ],
        time.perf_counter() - t0,
        30,
    )


def test_criterion_10_frontier(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "sweep.json"
    cfg.write_text(
        json.dumps({"prior": {"kind": "uniform", "lo": 1.0, "hi": 2.0}, "sweep": {"alpha_min": 1e-3, "alpha_max": 2.5, "count": 20}})
    )
    code = main(["sweep", "--config", str(cfg), "--out", str(tmp_path)])
    with open(tmp_path / "frontier.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    cost = np.array([float(r["cost"]) for r in rows])
    vs = np.array([float(r["vstar"]) for r in rows])
    alphas = np.array([float(r["alpha"]) for r in rows])
    record(
        10,
        "frontier monotonicity",
        [
            (f"exit code {code}, {len(rows)} rows", code == 0 and len(rows) == 20),
            ("rows sorted by alpha", bool(np.all(np.diff(alphas) > 0))),
            (f"cost nondecreasing ({cost[0]:.4f} to {cost[-1]:.4f})", bool(np.all(np.diff(cost) >= 0))),
            (f"vstar nonincreasing ({vs[0]:.3f} to {vs[-1]:.3f})", bool(np.all(np.diff(vs) <= 0))),
        ],
        time.perf_counter() - t0,
        10,
    )

