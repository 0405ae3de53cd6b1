"""Interaction topology, node loads and congestion signals."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


@dataclass
class Topology:
    """Nodes with capacities, an (inert) edge list and the agent -> node map.

    Edges are carried for neighbour-coupled extensions; load computation
    ignores them.
    """

    capacity: np.ndarray
    assignment: np.ndarray
    node_ids: list = None
    sectors: list = None
    edges: list = field(default_factory=list)

    def __post_init__(self):
        self.capacity = np.atleast_1d(np.asarray(self.capacity, dtype=float))
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        if self.node_ids is None:
            self.node_ids = list(range(self.capacity.size))
        if len(set(self.node_ids)) != len(self.node_ids):
            raise ValueError("node ids must be unique")
        if len(self.node_ids) != self.capacity.size:
            raise ValueError("one capacity per node required")
        if np.any(self.capacity <= 0):
            raise ValueError("capacities must be > 0")
        if self.assignment.size and (self.assignment.min() < 0 or self.assignment.max() >= self.capacity.size):
            raise ValueError("agent assigned to a node that does not exist")
        known = set(self.node_ids)
        for u, v in self.edges:
            if u not in known or v not in known:
                raise ValueError(f"edge ({u}, {v}) references an unknown node")

    @property
    def n_nodes(self):
        return self.capacity.size

    @classmethod
    def single_node(cls, capacity, n_agents):
        return cls(np.array([capacity], dtype=float), np.zeros(n_agents, dtype=np.int64))

    @classmethod
    def random_assignment(cls, capacity, n_agents, rng, **kw):
        capacity = np.atleast_1d(np.asarray(capacity, dtype=float))
        return cls(capacity, rng.integers(0, capacity.size, n_agents), **kw)


@dataclass
class LoadState:
    loads: np.ndarray
    aggregate: float
    congestion: np.ndarray = None


def compute_loads(topology, actions):
    """Per-node sums of agent actions and their total."""
    actions = np.asarray(actions, dtype=float)
    if actions.shape != topology.assignment.shape:
        raise ValueError("one action per agent required")
    loads = np.bincount(topology.assignment, weights=actions, minlength=topology.n_nodes)
    return LoadState(loads, float(loads.sum()))


def congestion_signal(load_state, capacity, tau, kappa):
    """kappa * max(0, utilisation - tau) per node."""
    if tau < 0 or kappa < 0:
        raise ValueError("tau and kappa must be >= 0")
    util = load_state.loads / np.asarray(capacity, dtype=float)
    return kappa * np.maximum(0.0, util - tau)


def overload_metric(load_state, capacity):
    """Fraction of overloaded nodes, or relative excess over the cap for a single node."""
    capacity = np.atleast_1d(np.asarray(capacity, dtype=float))
    if capacity.size == 1:
        return max(0.0, load_state.aggregate - capacity[0]) / capacity[0]
    return float(np.count_nonzero(load_state.loads > capacity)) / capacity.size


def read_topology(nodes_path, n_agents, rng, edges_path=None, assignment=None):
    """Load ``node_id, capacity[, sector]`` rows and an optional edge list.

    ``assignment`` maps agents to node ids; without it agents are assigned
    uniformly at random.
    """
    nodes = pd.read_csv(nodes_path)
    ids = nodes["node_id"].tolist()
    sectors = nodes["sector"].tolist() if "sector" in nodes.columns else None
    edges = []
    if edges_path is not None:
        e = pd.read_csv(edges_path)
        edges = list(zip(e.iloc[:, 0].tolist(), e.iloc[:, 1].tolist()))
    cap = nodes["capacity"].to_numpy(dtype=float)
    if assignment is None:
        assign = rng.integers(0, len(ids), n_agents)
    else:
        pos = {v: i for i, v in enumerate(ids)}
        try:
            assign = np.array([pos[a] for a in assignment], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"agent assigned to unknown node {exc.args[0]!r}") from None
    return Topology(cap, assign, node_ids=ids, sectors=sectors, edges=edges)
