"""Policy vectors, co-adaptation regimes, policy search and the causal graph."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np

from .exceptions import BudgetExhausted, CycleDetected, OutOfBounds, UnknownVariable


@dataclass(frozen=True)
class PolicyVector:
    names: tuple
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    step: np.ndarray

    def __post_init__(self):
        for attr in ("values", "lower", "upper", "step"):
            arr = np.asarray(getattr(self, attr), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ValueError("policy coordinate names must be unique")
        if not (self.values.shape == self.lower.shape == self.upper.shape == self.step.shape == (len(self.names),)):
            raise ValueError("one value, bound pair and step per coordinate required")
        if np.any(self.step <= 0):
            raise ValueError("policy steps must be > 0")
        if np.any(self.lower > self.upper):
            raise ValueError("policy lower bound exceeds upper bound")
        if np.any(self.values < self.lower) or np.any(self.values > self.upper):
            raise OutOfBounds(f"policy {self.as_dict()} outside its bounds")

    @classmethod
    def from_config(cls, coords):
        """``coords`` is a list of mappings with name, value, lower, upper, step."""
        return cls(
            tuple(c["name"] for c in coords),
            [c["value"] for c in coords],
            [c.get("lower", -math.inf) for c in coords],
            [c.get("upper", math.inf) for c in coords],
            [c.get("step", 1.0) for c in coords],
        )

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self.names

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def get(self, name, default=None):
        return self[name] if name in self.names else default

    def index(self, name):
        return self.names.index(name)

    def clamp(self, values):
        return np.clip(np.asarray(values, dtype=float), self.lower, self.upper)

    def with_values(self, values):
        return replace(self, values=self.clamp(values))

    def with_overrides(self, overrides):
        """Copy with named coordinates set; raises OutOfBounds outside the bounds."""
        vals = self.values.copy()
        for name, v in overrides.items():
            if name not in self.names:
                raise KeyError(f"unknown policy coordinate {name!r}")
            vals[self.index(name)] = float(v)
        return replace(self, values=vals)

    def as_dict(self):
        return {n: float(v) for n, v in zip(self.names, self.values)}


class Regime(enum.Enum):
    CPCA = "CPCA"
    CPVA = "CPVA"
    VPCA = "VPCA"
    VPVA = "VPVA"

    @property
    def varies_policy(self):
        return self in (Regime.VPCA, Regime.VPVA)

    @property
    def adaptive_agents(self):
        return self in (Regime.CPVA, Regime.VPVA)

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown regime {value!r}; expected one of CPCA, CPVA, VPCA, VPVA") from None


# ---------------------------------------------------------------------------
# online policy rule G
# ---------------------------------------------------------------------------


@dataclass
class SearchState:
    """Bookkeeping for epoch-based single-coordinate probing.

    Probe option ``k`` moves coordinate ``k // 2`` by ``+step`` (even k) or
    ``-step`` (odd k). An accepted probe is repeated; a rejected one
    advances the cursor to the next option.
    """

    incumbent: np.ndarray = None
    accepted_j: float = None
    probe: int = None
    cursor: int = 0
    epochs: int = 0
    window: int = 50
    decay: float = 1.0
    scale: float = 1.0
    rejections: int = 0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("search window must be >= 1")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("step decay must lie in (0, 1]")


def online_policy_step(policy, state, j_hat, t, epoch_length=50, tol=1e-6):
    """Policy update G, acting only at epoch boundaries (t > 0, t mod epoch_length == 0).

    At a boundary the pending probe is kept if ``j_hat`` beats the last
    accepted performance by more than ``tol`` and reverted otherwise, then
    the next probe is proposed. An infinite ``tol`` can never accept, so no
    probe is issued at all.
    """
    if t <= 0 or t % epoch_length != 0 or not math.isfinite(tol):
        return policy, state
    st = replace(state)
    st.epochs += 1
    if st.accepted_j is None:
        st.incumbent = policy.values.copy()
        st.accepted_j = float(j_hat)
    elif st.probe is not None:
        if j_hat > st.accepted_j + tol:
            st.incumbent = policy.values.copy()
            st.accepted_j = float(j_hat)
            st.cursor = st.probe
            st.rejections = 0
        else:
            st.cursor = st.probe + 1
            st.rejections += 1
            if st.rejections >= 2 * len(policy):
                st.scale *= st.decay
                st.rejections = 0
    n_opt = 2 * len(policy)
    for k in range(n_opt):
        opt = (st.cursor + k) % n_opt
        cand = st.incumbent.copy()
        i = opt // 2
        cand[i] += (1.0 if opt % 2 == 0 else -1.0) * policy.step[i] * st.scale
        cand = policy.clamp(cand)
        if not np.array_equal(cand, st.incumbent):
            st.probe = opt
            st.cursor = opt
            return policy.with_values(cand), st
    st.probe = None
    return policy.with_values(st.incumbent), st


# ---------------------------------------------------------------------------
# offline hill climbing
# ---------------------------------------------------------------------------


@dataclass
class HillClimbResult:
    policy: PolicyVector
    value: float
    trace: list
    n_evals: int
    exhausted: bool = False
    final_scale: float = 1.0  # multiplier of the last step size actually evaluated

    @property
    def terminal_step(self):
        return self.policy.step * self.final_scale

    @property
    def accepted(self):
        return [rec for rec in self.trace if rec["accepted"]]


def hill_climb_offline(evaluator, p0, tol=1e-6, max_evals=200, step_decay=0.5, min_step_ratio=1e-3, map_fn=map):
    """Axis-neighbour hill climbing on a noisy black-box ``evaluator(policy) -> (mean, var)``.

    Each round evaluates the 2d clamped neighbours at the current step; the
    best (first listed on ties) replaces the incumbent if it improves by
    more than ``tol``, otherwise the step shrinks by ``step_decay``. Stops once
    the step falls below ``min_step_ratio`` of its initial size or the
    budget runs out (flagged, best-so-far returned).

    ``map_fn`` may be an executor's ``map`` to evaluate neighbours concurrently.
    """
    if max_evals < 1:
        raise ValueError("max_evals must be >= 1")
    if not 0.0 < step_decay < 1.0:
        raise ValueError("step_decay must lie in (0, 1)")
    trace = []
    mean, var = evaluator(p0)
    inc, inc_j = p0, float(mean)
    trace.append({"values": p0.values.copy(), "mean": inc_j, "var": float(var), "accepted": True})
    scale = used = 1.0
    exhausted = False
    while scale >= min_step_ratio:
        cands = []
        for i in range(len(inc)):
            for sign in (1.0, -1.0):
                vals = inc.values.copy()
                vals[i] += sign * inc.step[i] * scale
                cand = inc.with_values(vals)
                if not np.array_equal(cand.values, inc.values):
                    cands.append(cand)
        if not cands:
            scale *= step_decay
            continue
        room = max_evals - len(trace)
        if room <= 0:
            exhausted = True
            break
        truncated = len(cands) > room
        cands = cands[:room]
        used = scale
        best = None
        for cand, (m, v) in zip(cands, map_fn(evaluator, cands)):
            trace.append({"values": cand.values.copy(), "mean": float(m), "var": float(v), "accepted": False})
            if best is None or m > trace[best]["mean"]:
                best = len(trace) - 1
        if trace[best]["mean"] > inc_j + tol:
            trace[best]["accepted"] = True
            inc, inc_j = inc.with_values(trace[best]["values"]), trace[best]["mean"]
        elif not truncated:
            scale *= step_decay
        if truncated:
            exhausted = True
            break
    if exhausted:
        warnings.warn(f"hill climb stopped after {len(trace)} evaluations", BudgetExhausted, stacklevel=2)
    return HillClimbResult(inc, inc_j, trace, len(trace), exhausted, used)


# ---------------------------------------------------------------------------
# structural causal graph
# ---------------------------------------------------------------------------


@dataclass
class ScmGraph:
    """Variables and directed edges; ``lag`` 0 is within a time slice, 1 points to t+1."""

    variables: tuple
    edges: list = field(default_factory=list)
    policy_var: str = "P_t"
    state_var: str = "S_t"
    intervention: PolicyVector = None

    @property
    def has_feedback(self):
        return any(u == self.state_var and v == self.policy_var and lag == 1 for u, v, lag in self.edges)

    def edge_set(self):
        return {(u, v, lag) for u, v, lag in self.edges}


def validate_scm(scm):
    """Raise UnknownVariable or CycleDetected; returns True otherwise."""
    known = set(scm.variables)
    for u, v, lag in scm.edges:
        for name in (u, v):
            if name not in known:
                raise UnknownVariable(f"edge references undeclared variable {name!r}")
        if lag not in (0, 1):
            raise ValueError(f"edge lag must be 0 or 1, got {lag}")
    g = nx.DiGraph()
    g.add_nodes_from(scm.variables)
    g.add_edges_from((u, v) for u, v, lag in scm.edges if lag == 0)
    try:
        cycle = nx.find_cycle(g)
    except nx.NetworkXNoCycle:
        return True
    raise CycleDetected([u for u, _ in cycle] + [cycle[0][0]])


def apply_intervention(scm, p):
    """do(P = p): pin the policy and cut the state -> next-policy feedback edge."""
    if np.any(p.values < p.lower) or np.any(p.values > p.upper):
        raise OutOfBounds(f"intervention {p.as_dict()} outside policy bounds")
    edges = [(u, v, lag) for u, v, lag in scm.edges if not (v == scm.policy_var and lag == 1)]
    out = replace(scm, edges=edges, intervention=p)
    validate_scm(out)
    return out
