"""Experiment configuration: YAML files merged over defaults and schema-checked.

The fingerprint of a config is the blake2b-64 hash of its canonical JSON
text (sorted keys, compact separators), so a config written back out in
canonical form hashes to the same value.
"""
from __future__ import annotations

import copy
import hashlib
import json

import jsonschema
import yaml

from .exceptions import SchemaError

DEFAULTS = {
    "scenario": "grid",
    "regime": "CPCA",
    "seed": 0,
    "replications": 1,
    "horizon": 1000,
    "window": 250,
    "burn_in": None,
    "workers": None,
    "agents": {
        "n": 100,
        "theta": {"dist": "uniform", "low": 0.5, "high": 1.5},
        "eta": {"dist": "uniform", "low": 0.0, "high": 0.02},
        "population_file": None,
    },
    "behavior": {"relax": 0.0, "belief_smoothing": 1.0, "lookahead": 0, "x_max": 1.0e6, "history": 4},
    "environment": {
        "nodes": 1,
        "capacity": 100.0,
        "capacity_schedule": None,
        "topology_file": None,
        "edges_file": None,
    },
    "congestion": {"tau": 0.9, "kappa": 0.0},
    "policy": None,
    "search": {"epoch": 50, "tolerance": 1.0e-6, "window": None, "decay": 1.0},
    "weights": {"alpha": 1.0, "beta": 1.0, "gamma": 1.0},
    "shocks": {"sigma": 0.0, "amplitude": 0.0, "period": 24},
    "volatility_window": 20,
    "diagnostics": {
        "observable": "aggregate",
        "alphabet": 2,
        "max_length": None,
        "alpha": 0.005,
        "min_count": 10,
        "s_drift": 2.0,
        "f_cyc": 0.4,
    },
    "intervention": None,
    "meta": {},
    "sweep": None,
    "morris": None,
}

# keys that change how a config is executed but not what it computes
EXECUTION_KEYS = ("workers",)

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_pos_int = {"type": "integer", "minimum": 1}
_prior = {
    "oneOf": [
        {"type": "number", "minimum": 0},
        {
            "type": "object",
            "properties": {
                "dist": {"enum": ["uniform", "normal", "categorical"]},
                "low": _num,
                "high": _num,
                "mean": _num,
                "sd": _nonneg,
                "probabilities": {"type": "object"},
            },
            "additionalProperties": False,
        },
    ]
}
_range = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scenario": {"enum": ["emissions", "grid"]},
        "regime": {"enum": ["CPCA", "CPVA", "VPCA", "VPVA"]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "replications": _pos_int,
        "horizon": _pos_int,
        "window": _pos_int,
        "burn_in": {"type": ["integer", "null"], "minimum": 0},
        "workers": {"type": ["integer", "null"], "minimum": 1},
        "agents": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": _pos_int,
                "theta": _prior,
                "eta": _prior,
                "population_file": {"type": ["string", "null"]},
            },
        },
        "behavior": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "relax": {"type": "number", "minimum": 0, "maximum": 1},
                "belief_smoothing": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "lookahead": {"type": "integer", "minimum": 0},
                "x_max": {"type": "number", "exclusiveMinimum": 0},
                "history": {"type": "integer", "minimum": 4},
            },
        },
        "environment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nodes": _pos_int,
                "capacity": {
                    "oneOf": [
                        {"type": "number", "exclusiveMinimum": 0},
                        {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                    ]
                },
                "capacity_schedule": {
                    "type": ["array", "null"],
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 1,
                },
                "topology_file": {"type": ["string", "null"]},
                "edges_file": {"type": ["string", "null"]},
            },
        },
        "congestion": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"tau": _nonneg, "kappa": _nonneg},
        },
        "policy": {
            "type": ["array", "null"],
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "value"],
                "properties": {
                    "name": {"type": "string"},
                    "value": _num,
                    "lower": _num,
                    "upper": _num,
                    "step": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "search": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epoch": _pos_int,
                "tolerance": {"type": "number", "minimum": 0},
                "window": {"type": ["integer", "null"], "minimum": 1},
                "decay": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"alpha": _nonneg, "beta": _nonneg, "gamma": _nonneg},
        },
        "shocks": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"sigma": _nonneg, "amplitude": _nonneg, "period": {"type": "number", "minimum": 2}},
        },
        "volatility_window": {"type": "integer", "minimum": 2},
        "diagnostics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "observable": {"enum": ["aggregate", "overload"]},
                "alphabet": {"type": "integer", "minimum": 2},
                "max_length": {"type": ["integer", "null"], "minimum": 1},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "min_count": _pos_int,
                "s_drift": _nonneg,
                "f_cyc": _nonneg,
            },
        },
        "intervention": {"type": ["object", "null"], "additionalProperties": _num},
        "meta": {"type": "object"},
        "sweep": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["grid", "lhs"]},
                "levels": {"type": "integer", "minimum": 1},
                "n": _pos_int,
                "seed": {"type": "integer", "minimum": 0},
                "parameters": {"type": "object", "additionalProperties": _range},
                "regimes": {"type": "array", "items": {"enum": ["CPCA", "CPVA", "VPCA", "VPVA"]}},
                "max_points": _pos_int,
            },
        },
        "morris": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "properties": {
                "parameters": {"type": "object", "additionalProperties": _range, "minProperties": 1},
                "trajectories": {"type": "integer", "minimum": 2},
                "levels": {"type": "integer", "minimum": 4},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
    },
}


def merge(base, override):
    """Recursive dict merge; non-dict values in ``override`` replace ``base``."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(cfg):
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path)
        raise SchemaError(path, exc.message) from None
    if cfg["window"] > cfg["horizon"]:
        raise SchemaError("window", "evaluation window exceeds horizon")
    return cfg


def resolve(raw):
    """Merge ``raw`` over the defaults and validate."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise SchemaError("", "config must be a mapping")
    return validate(merge(DEFAULTS, raw))


def load(path):
    with open(path, encoding="utf-8") as fh:
        return resolve(yaml.safe_load(fh))


def canonical_text(cfg):
    body = {k: v for k, v in cfg.items() if k not in EXECUTION_KEYS}
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def fingerprint(cfg):
    return hashlib.blake2b(canonical_text(cfg).encode("utf-8"), digest_size=8).hexdigest()


def dump(cfg, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


def set_path(cfg, path, value):
    """Return a copy of ``cfg`` with dotted ``path`` set to ``value``.

    Policy coordinates are addressed by name, e.g. ``policy.lambda.value``.
    """
    out = copy.deepcopy(cfg)
    node = out
    parts = path.split(".")
    for i, key in enumerate(parts[:-1]):
        if isinstance(node, list):
            match = [item for item in node if isinstance(item, dict) and item.get("name") == key]
            if not match:
                raise SchemaError(".".join(parts[: i + 1]), "no such list entry")
            node = match[0]
            continue
        if not isinstance(node, dict) or key not in node:
            raise SchemaError(".".join(parts[: i + 1]), "no such config field")
        if node[key] is None:
            node[key] = {}
        elif isinstance(node[key], (int, float)) and not isinstance(node[key], bool):
            # point-mass prior addressed by a sub-field
            node[key] = {"dist": "uniform", "low": node[key], "high": node[key]}
        node = node[key]
    last = parts[-1]
    if isinstance(node, list):
        raise SchemaError(path, "cannot assign a list entry")
    if isinstance(node, dict) and node is not out.get("meta") and last not in node and not _open_field(parts):
        raise SchemaError(path, "no such config field")
    node[last] = value
    return out


def _open_field(parts):
    return parts[0] in ("meta", "intervention")


def parse_assignments(text):
    """``"lambda=2.0,tau=0.8"`` -> ``{"lambda": 2.0, "tau": 0.8}``."""
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise ValueError(f"expected name=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = float(v)
    return out
