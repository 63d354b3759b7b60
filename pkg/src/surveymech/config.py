"""Run configuration: JSON schema, loading and conversion to domain objects."""

from __future__ import annotations

import json
import math
import os

import jsonschema

from .errors import ConfigError
from .estimators import PopulationSpec, ResponseModel, worst_case_population
from .offer import OfferDistribution
from .optimizer import Objective
from .prior import PriorSpec

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_COUNT = {"type": "integer", "minimum": 1}

PRIOR_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "oneOf": [
        {"properties": {"kind": {"const": "exponential"}, "rate": _POS}, "additionalProperties": False},
        {
            "properties": {"kind": {"const": "uniform"}, "lo": _NUM, "hi": _NUM},
            "required": ["lo", "hi"],
            "additionalProperties": False,
        },
        {
            "properties": {"kind": {"const": "lognormal"}, "mu": _NUM, "sigma": _POS},
            "additionalProperties": False,
        },
        {
            "properties": {
                "kind": {"const": "piecewise_polynomial"},
                "breakpoints": {"type": "array", "items": _NUM, "minItems": 2},
                "coefficients": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 1}},
            },
            "required": ["breakpoints", "coefficients"],
            "additionalProperties": False,
        },
    ],
}

OBJECTIVE_SCHEMA = {
    "type": "object",
    "oneOf": [
        {
            "properties": {"kind": {"const": "linear"}, "weight": _POS},
            "required": ["kind", "weight"],
            "additionalProperties": False,
        },
        {
            "properties": {"kind": {"const": "quadratic"}, "wc": _POS, "wv": _POS},
            "required": ["kind"],
            "additionalProperties": False,
        },
    ],
}

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["variant"],
    "oneOf": [
        {
            "properties": {"variant": {"const": "budget"}, "n": _COUNT, "budget": _POS},
            "required": ["n", "budget"],
            "additionalProperties": False,
        },
        {
            "properties": {"variant": {"const": "variance"}, "n": _COUNT, "vmax": _POS},
            "required": ["n", "vmax"],
            "additionalProperties": False,
        },
        {
            "properties": {"variant": {"const": "convex"}, "n": _COUNT, "objective": OBJECTIVE_SCHEMA},
            "required": ["n", "objective"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "variant": {"const": "variable_n"},
                "beta": {"type": "number", "minimum": 0},
                "budget": _POS,
                "vmax": _POS,
            },
            "required": ["beta"],
            "oneOf": [{"required": ["budget"]}, {"required": ["vmax"]}],
            "additionalProperties": False,
        },
    ],
}

RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"enum": ["worst_case", "worst_case_tilde", "constant", "linear", "logistic", "table"]}},
}

SCHEMA = {
    "type": "object",
    "properties": {
        "prior": PRIOR_SCHEMA,
        "problem": PROBLEM_SCHEMA,
        "simulation": {
            "type": "object",
            "required": ["design", "trials"],
            "properties": {
                "design": {"type": "string"},
                "trials": {"type": "integer", "minimum": 2},
                "n": _COUNT,
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "response": RESPONSE_SCHEMA,
            },
            "additionalProperties": False,
        },
        "verify": {
            "type": "object",
            "required": ["design"],
            "properties": {
                "design": {"type": "string"},
                "grid_points": {"type": "integer", "minimum": 10},
                "oracle_rel_tol": _POS,
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {
                "alphas": {"type": "array", "items": _POS, "minItems": 1},
                "alpha_min": _POS,
                "alpha_max": _POS,
                "count": _COUNT,
                "n": _COUNT,
            },
            "oneOf": [{"required": ["alphas"]}, {"required": ["alpha_min", "alpha_max", "count"]}],
            "additionalProperties": False,
        },
        "tolerances": {
            "type": "object",
            "properties": {"certificate_rel": _POS, "monotone_rel": _POS},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

REQUIRED = {
    "design": ("prior", "problem"),
    "simulate": ("simulation",),
    "verify": ("verify",),
    "sweep": ("prior", "sweep"),
}


def load_config(path, command):
    """Read and validate a config file; relative file references resolve against its folder."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: invalid config at {where}: {exc.message}") from None
    missing = [key for key in REQUIRED[command] if key not in data]
    if missing:
        raise ConfigError(f"{path}: '{command}' needs the section(s) {', '.join(missing)}")
    base = os.path.dirname(os.path.abspath(path))
    for section in ("simulation", "verify"):
        if section in data and not os.path.isabs(data[section]["design"]):
            data[section]["design"] = os.path.join(base, data[section]["design"])
    return data


def make_prior(data):
    try:
        return PriorSpec.from_json(data)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid prior: {exc}") from None


def make_objective(data):
    if data["kind"] == "linear":
        return Objective.linear(data["weight"])
    return Objective.quadratic(data.get("wc", 1.0), data.get("wv", 1.0))


def make_population(prior, data):
    data = dict(data or {"kind": "worst_case"})
    if data["kind"] == "worst_case":
        return worst_case_population(prior, "ht")
    if data["kind"] == "worst_case_tilde":
        return worst_case_population(prior, "tilde")
    try:
        return PopulationSpec(prior, ResponseModel.from_json(data), data["kind"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid response model: {exc}") from None


def load_design(path):
    """Read a design file; returns its JSON and the rebuilt (prior, offer law).

    The offer law uses the file's top-level alpha, so an edited alpha is
    what gets checked.
    """
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"design file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    try:
        prior = make_prior(data["prior"])
        law = dict(data["offer_distribution"])
        law["alpha"] = float(data["alpha"])
        dist = OfferDistribution.from_json(law, prior)
        n, lam = int(data["n"]), float(data["lambda"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a design file ({exc})") from None
    if n < 1 or not lam > 0 or not math.isfinite(lam):
        raise ConfigError(f"{path}: design needs n >= 1 and a positive lambda")
    return data, prior, dist
