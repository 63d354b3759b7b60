"""survey: design, simulate, verify and sweep posted-price survey mechanisms.

Exit codes: 0 success, 1 input error, 2 infeasible, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile

import numpy as np

from .config import load_config, load_design, make_objective, make_population, make_prior
from .errors import (
    ConfigError,
    DegenerateMechanism,
    Infeasible,
    NoCrossing,
    NoFiniteOptimum,
    SurveyError,
)
from .estimators import simulate
from .functionals import certificate, expected_cost, vstar
from .offer import build_offer_distribution
from .optimizer import solve_budget, solve_convex, solve_variable_n, solve_variance
from .oracle import GridProblem, grid_optimize

log = logging.getLogger("surveymech")

OK, INPUT_ERROR, INFEASIBLE, VERIFY_FAILED = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class VerificationFailure(SurveyError):
    pass


def _write_outputs(out_dir, files):
    """Write every file or none: stage into temporaries, then rename."""
    os.makedirs(out_dir, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.")
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, os.path.join(out_dir, name)))
        for tmp, final in staged:
            os.replace(tmp, final)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)
    return [os.path.join(out_dir, name) for name in files]


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ----------------------------------------------------------------- commands
def cmd_design(cfg, args):
    prior = make_prior(cfg["prior"])
    prob = cfg["problem"]
    variant = prob["variant"]
    if variant == "budget":
        design = solve_budget(prior, prob["n"], prob["budget"])
    elif variant == "variance":
        design = solve_variance(prior, prob["n"], prob["vmax"])
    elif variant == "convex":
        design = solve_convex(prior, prob["n"], make_objective(prob["objective"]))
    else:
        design = solve_variable_n(prior, prob["beta"], budget=prob.get("budget"), vmax=prob.get("vmax"))
    log.info("alpha=%.12g n=%d cost=%.12g vstar=%.12g", design.alpha, design.n, design.cost, design.vstar)
    return {"design.json": _dumps(design.to_json())}, OK


def cmd_simulate(cfg, args):
    sim = cfg["simulation"]
    data, prior, dist = load_design(sim["design"])
    n = sim.get("n", int(data["n"]))
    seed = args.seed if args.seed is not None else sim.get("seed", 0)
    pop = make_population(prior, sim.get("response"))
    report = simulate(pop, dist, n, sim["trials"], seed=seed, threads=args.threads)
    out = report.to_json()
    out["population"] = pop.name
    return {"simulation.json": _dumps(out), "simulation.csv": report.to_csv()}, OK


def verify_design(data, prior, dist, grid_points=200, oracle_rel_tol=0.01):
    """Certificate at the stored multiplier plus the grid-oracle comparison."""
    n, lam = int(data["n"]), float(data["lambda"])
    cert = certificate(prior, dist, n, lam=lam)
    unit_cost = expected_cost(prior, dist, 1).value
    analytic = vstar(prior, dist, 1).value
    gp = GridProblem.from_prior(prior, unit_cost * n, n, points=grid_points)
    sol = grid_optimize(gp)
    gap = sol.objective / analytic - 1.0
    summary = {
        "certificate": cert.to_json(),
        "oracle": {
            "grid_points": grid_points,
            "objective": sol.objective,
            "analytic_objective": analytic,
            "relative_gap": gap,
            "iterations": sol.iterations,
            "passed": abs(gap) <= oracle_rel_tol,
        },
    }
    summary["passed"] = bool(cert.passed and summary["oracle"]["passed"])
    return cert, summary


def cmd_verify(cfg, args):
    ver = cfg["verify"]
    data, prior, dist = load_design(ver["design"])
    cert, summary = verify_design(data, prior, dist, ver.get("grid_points", 200), ver.get("oracle_rel_tol", 0.01))
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["x", "H"])
    for x, h in zip(cert.x, cert.h):
        out.writerow([repr(float(x)), repr(float(h))])
    files = {"certificate.csv": buf.getvalue(), "verify.json": _dumps(summary)}
    if not summary["passed"]:
        print(
            f"verification failed: flatness deviation {cert.max_flatness_deviation:.3e} "
            f"(tolerance {cert.tolerance:.3e}), off-support slack {cert.min_off_support_slack:.3e}, "
            f"oracle gap {summary['oracle']['relative_gap']:.3e}",
            file=sys.stderr,
        )
        return files, VERIFY_FAILED
    return files, OK


def sweep_rows(prior, alphas, n=1):
    rows = []
    for a in sorted(alphas):
        try:
            d = build_offer_distribution(prior, a)
        except DegenerateMechanism:
            rows.append({"alpha": a, "cost": None, "vstar": None, "xbar": None, "flag": "degenerate"})
            continue
        rows.append(
            {
                "alpha": a,
                "cost": expected_cost(prior, d, n).value,
                "vstar": vstar(prior, d, n).value,
                "xbar": d.xbar,
                "flag": "",
            }
        )
    return rows


def frontier_violations(rows, rel=1e-9):
    """Adjacent valid rows where cost falls or vstar rises beyond ``rel``."""
    good = [r for r in rows if not r["flag"]]
    bad = []
    for prev, cur in zip(good, good[1:]):
        if cur["cost"] < prev["cost"] * (1 - rel) or cur["vstar"] > prev["vstar"] * (1 + rel):
            bad.append((prev["alpha"], cur["alpha"]))
    return bad


def cmd_sweep(cfg, args):
    prior = make_prior(cfg["prior"])
    sw = cfg["sweep"]
    if "alphas" in sw:
        alphas = sw["alphas"]
    else:
        if sw["alpha_min"] > sw["alpha_max"]:
            raise ConfigError("alpha_min exceeds alpha_max")
        alphas = np.geomspace(sw["alpha_min"], sw["alpha_max"], sw["count"]).tolist()
    rows = sweep_rows(prior, alphas, sw.get("n", 1))
    rel = cfg.get("tolerances", {}).get("monotone_rel", 1e-9)
    bad = frontier_violations(rows, rel)
    if bad:
        print(f"frontier is not monotone between alpha pairs {bad}", file=sys.stderr)
        return {}, VERIFY_FAILED
    buf = io.StringIO()
    out = csv.DictWriter(buf, fieldnames=["alpha", "cost", "vstar", "xbar", "flag"], lineterminator="\n")
    out.writeheader()
    for r in rows:
        out.writerow({k: "" if v is None else repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return {"frontier.csv": buf.getvalue()}, OK


COMMANDS = {"design": cmd_design, "simulate": cmd_simulate, "verify": cmd_verify, "sweep": cmd_sweep}


# --------------------------------------------------------------------- main
def _seed(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _threads(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"threads must be an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("threads must be at least 1")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="survey", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory (default: current directory)")
    parser.add_argument("--seed", type=_seed, default=None, help="master seed for simulate")
    parser.add_argument("--threads", type=_threads, default=1, help="worker threads for simulate")
    return parser


def _setup_logging():
    name = os.environ.get("SURVEY_LOG", "error").strip().lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"SURVEY_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return OK if exc.code == 0 else INPUT_ERROR
    try:
        _setup_logging()
        cfg = load_config(args.config, args.command)
        files, code = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except Infeasible as exc:
        extra = f" (achievable range {exc.achievable})" if exc.achievable is not None else ""
        print(f"infeasible: {exc}{extra}", file=sys.stderr)
        return INFEASIBLE
    except (NoFiniteOptimum, NoCrossing) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return INFEASIBLE
    except (SurveyError, ValueError) as exc:
        print(f"input error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INPUT_ERROR
    if files:
        for path in _write_outputs(args.out, files):
            log.info("wrote %s", path)
    return code


if __name__ == "__main__":
    sys.exit(main())
