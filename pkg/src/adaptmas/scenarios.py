"""Emissions and grid case studies bound to the generic engine.

Both scenarios share one transition: agents abate in response to an
effective price plus a congestion signal. They differ only in how the
policy vector becomes that price and in what the aggregate is called.

* emissions: policy ``(lambda, tau, sigma)``; price ``max(0, lambda - sigma)``
* grid: policy ``(lambda, tau)``; price ``max(0, lambda)``

``tau`` is consumed by the congestion threshold in both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import config as cfgmod
from .control import PolicyVector, Regime, ScmGraph, apply_intervention, validate_scm
from .exceptions import OutOfBounds, SchemaError
from .population import AttributePrior

DEFAULT_POLICY = {
    "emissions": [
        {"name": "lambda", "value": 0.0, "lower": 0.0, "upper": 10.0, "step": 0.1},
        {"name": "tau", "value": 1.0, "lower": 0.5, "upper": 1.5, "step": 0.05},
        {"name": "sigma", "value": 0.0, "lower": 0.0, "upper": 10.0, "step": 0.1},
    ],
    "grid": [
        {"name": "lambda", "value": 0.0, "lower": 0.0, "upper": 10.0, "step": 0.1},
        {"name": "tau", "value": 0.9, "lower": 0.5, "upper": 1.5, "step": 0.05},
    ],
}

STATE_VAR = {"emissions": "E_t", "grid": "s_t"}


@dataclass(frozen=True)
class ShockSpec:
    sigma: float = 0.0
    amplitude: float = 0.0
    period: float = 24.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("shock sigma must be >= 0")
        if self.period < 2:
            raise ValueError("demand period must be >= 2")


@dataclass(frozen=True)
class RegimePreset:
    regime: Regime
    policy_search: bool
    zero_eta: bool

    @classmethod
    def of(cls, regime):
        r = Regime.parse(regime)
        return cls(r, r.varies_policy, not r.adaptive_agents)


def emissions_price(policy_values, names):
    lam = policy_values[names.index("lambda")] if "lambda" in names else 0.0
    sub = policy_values[names.index("sigma")] if "sigma" in names else 0.0
    return max(0.0, float(lam - sub))


def grid_price(policy_values, names):
    lam = policy_values[names.index("lambda")] if "lambda" in names else 0.0
    return max(0.0, float(lam))


PRICE = {"emissions": emissions_price, "grid": grid_price}


def exogenous_demand(t, shocks, rng):
    """Demand scale X_t: a sinusoidal profile times a floored gaussian factor.

    One standard normal is drawn per call even when ``sigma`` is 0, so two
    configs that differ only in shock size stay on the same random stream.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    scale = 1.0 + shocks.amplitude * math.sin(2.0 * math.pi * t / shocks.period)
    z = rng.standard_normal()
    return scale * max(0.0, 1.0 + shocks.sigma * z)


def default_scm(kind, regime="VPVA"):
    if kind not in STATE_VAR:
        raise SchemaError("scenario", f"unknown scenario {kind!r}")
    s = STATE_VAR[kind]
    edges = [("P_t", s, 0), ("Theta", s, 0), ("X_t", s, 0), (s, "Y_t", 0)]
    if Regime.parse(regime).varies_policy:
        edges.append((s, "P_t", 1))
    scm = ScmGraph(("X_t", "Theta", "P_t", s, "Y_t"), edges, "P_t", s)
    validate_scm(scm)
    return scm


@dataclass(frozen=True)
class Scenario:
    """A validated config turned into engine-ready parameters."""

    kind: str
    preset: RegimePreset
    policy: PolicyVector
    scm: ScmGraph
    shocks: ShockSpec
    theta_prior: AttributePrior
    eta_prior: AttributePrior
    config: dict
    fingerprint: str

    @property
    def regime(self):
        return self.preset.regime

    @property
    def pinned(self):
        return self.scm.intervention is not None

    @property
    def search_enabled(self):
        return self.preset.policy_search and not self.pinned

    def effective_price(self, policy_values):
        return PRICE[self.kind](policy_values, self.policy.names)

    def with_config(self, **changes):
        raw = dict(self.config)
        raw.update(changes)
        return build_scenario(raw)


def build_scenario(config):
    """Validate ``config`` (raw or resolved mapping) and bind regime, policy and graph."""
    cfg = cfgmod.resolve(config)
    kind = cfg["scenario"]
    if cfg["policy"] is None:
        cfg["policy"] = [dict(c) for c in DEFAULT_POLICY[kind]]
    try:
        policy = PolicyVector.from_config(cfg["policy"])
    except OutOfBounds as exc:
        raise SchemaError("policy", str(exc)) from None
    except ValueError as exc:
        raise SchemaError("policy", str(exc)) from None
    if kind == "emissions" and "sigma" in policy and policy.lower[policy.index("sigma")] < 0:
        raise SchemaError("policy.sigma.lower", "subsidy must be >= 0")
    cap = cfg["environment"]["capacity"]
    if isinstance(cap, list) and cfg["environment"]["topology_file"] is None and len(cap) != cfg["environment"]["nodes"]:
        raise SchemaError("environment.capacity", "one capacity per node required")

    preset = RegimePreset.of(cfg["regime"])
    scm = default_scm(kind, preset.regime)
    if cfg["intervention"]:
        try:
            pinned = policy.with_overrides(cfg["intervention"])
            scm = apply_intervention(scm, pinned)
        except KeyError as exc:
            raise SchemaError("intervention", str(exc)) from None
        except OutOfBounds as exc:
            raise SchemaError("intervention", str(exc)) from None
        policy = pinned
    try:
        theta = AttributePrior.from_spec("theta", cfg["agents"]["theta"])
        eta = AttributePrior.from_spec("eta", cfg["agents"]["eta"])
    except Exception as exc:
        raise SchemaError("agents", str(exc)) from None
    sh = cfg["shocks"]
    return Scenario(
        kind,
        preset,
        policy,
        scm,
        ShockSpec(sh["sigma"], sh["amplitude"], sh["period"]),
        theta,
        eta,
        cfg,
        cfgmod.fingerprint(cfg),
    )


def capacity_vector(cfg, n_nodes):
    cap = cfg["environment"]["capacity"]
    arr = np.asarray(cap, dtype=float)
    return np.full(n_nodes, float(arr)) if arr.ndim == 0 else arr
