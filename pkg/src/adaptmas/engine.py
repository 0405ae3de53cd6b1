"""Discrete-time simulation loop, performance functional and replication.

Per step ``t`` the order is fixed: demand scale, agent actions, loads and
congestion, overload and volatility, Phi, then the policy rule. Agents
react to the policy in force during step ``t``; a policy change proposed at
the end of step ``t`` takes effect at ``t + 1``.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import behavior, environment
from .control import SearchState, online_policy_step
from .exceptions import NumericOverflow, WindowTooLong
from .population import draw_behavioral_attributes
from .scenarios import Scenario, build_scenario, capacity_vector, exogenous_demand


def split_seed(master, *keys):
    """Stable 64-bit child seed of ``master`` for the given keys."""
    text = ":".join(str(k) for k in (master, *keys))
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def phi(aggregate, overload, vol, alpha, beta, gamma):
    if min(alpha, beta, gamma) < 0:
        raise ValueError("weights must be >= 0")
    return -alpha * aggregate - beta * overload - gamma * vol


def volatility(history, window=20):
    """Sample sd (ddof=1) of the last ``window`` values; 0 with fewer than two."""
    if window < 2:
        raise ValueError("volatility window must be >= 2")
    h = np.asarray(history, dtype=float)[-window:]
    if h.size < 2 or h.min() == h.max():
        return 0.0
    return float(np.std(h, ddof=1))


@dataclass
class RunRecord:
    aggregate: np.ndarray
    overload: np.ndarray
    volatility: np.ndarray
    phi: np.ndarray
    policy: np.ndarray
    policy_names: tuple
    J: float
    seed: int
    config_hash: str
    regime: str
    window: int
    burn_in: int
    loads: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self):
        return self.aggregate.size

    def post_burn_in(self, series="aggregate"):
        return getattr(self, series)[self.burn_in :]

    def frame(self):
        df = pd.DataFrame(
            {
                "t": np.arange(self.horizon),
                "aggregate": self.aggregate,
                "overload": self.overload,
                "volatility": self.volatility,
                "phi": self.phi,
            }
        )
        for i, name in enumerate(self.policy_names):
            df[name] = self.policy[:, i]
        return df

    def to_csv(self, path=None):
        buf = io.StringIO()
        self.frame().to_csv(buf, index=False, lineterminator="\n", float_format="%.17g")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text

    def summary(self):
        post = self.post_burn_in("overload")
        return {
            "seed": self.seed,
            "config_hash": self.config_hash,
            "J": self.J,
            "mean_aggregate": float(np.mean(self.post_burn_in("aggregate"))),
            "overload_freq": float(np.count_nonzero(post > 0) / max(post.size, 1)),
            "regime": self.regime,
        }


def evaluate_J(record, K=None):
    """Mean of Phi over the final ``K`` steps (the record's window by default)."""
    series = record.phi if isinstance(record, RunRecord) else np.asarray(record, dtype=float)
    if K is None:
        K = record.window
    if K < 1:
        raise ValueError("window must be >= 1")
    if K > series.size:
        raise WindowTooLong(f"window {K} exceeds horizon {series.size}")
    return float(np.mean(series[series.size - K :]))


def _as_scenario(config):
    return config if isinstance(config, Scenario) else build_scenario(config)


def _agents(sc, seed):
    cfg = sc.config
    n = cfg["agents"]["n"]
    env = cfg["environment"]
    pop_file = cfg["agents"]["population_file"]
    if pop_file:
        pop = pd.read_csv(pop_file)
        theta = pop["theta"].to_numpy(dtype=float)
        eta = pop["eta"].to_numpy(dtype=float)
        node_col = pop["node"].tolist() if "node" in pop.columns else None
        n = theta.size
    else:
        pop = pd.DataFrame({"id": np.arange(n)})
        pop = draw_behavioral_attributes(pop, [sc.theta_prior, sc.eta_prior], split_seed(seed, "population"))
        theta = pop["theta"].to_numpy(dtype=float)
        eta = pop["eta"].to_numpy(dtype=float)
        node_col = None
    if sc.preset.zero_eta:
        eta = np.zeros_like(eta)
    topo_rng = np.random.default_rng(split_seed(seed, "topology"))
    if env["topology_file"]:
        topo = environment.read_topology(env["topology_file"], n, topo_rng, env["edges_file"], node_col)
    elif env["nodes"] == 1:
        topo = environment.Topology.single_node(capacity_vector(cfg, 1)[0], n)
    else:
        cap = capacity_vector(cfg, env["nodes"])
        if node_col is not None:
            topo = environment.Topology(cap, np.asarray(node_col, dtype=np.int64))
        else:
            topo = environment.Topology.random_assignment(cap, n, topo_rng)
    return theta, eta, topo


def simulate(config, seed=None):
    """Run one replication; ``seed`` defaults to the config's master seed."""
    sc = _as_scenario(config)
    cfg = sc.config
    seed = cfg["seed"] if seed is None else int(seed)
    T, K = cfg["horizon"], cfg["window"]
    if K > T:
        raise WindowTooLong(f"window {K} exceeds horizon {T}")
    burn_in = cfg["burn_in"] if cfg["burn_in"] is not None else T // 4
    beh, cong, w = cfg["behavior"], cfg["congestion"], cfg["weights"]
    search = cfg["search"]
    epoch = search["epoch"]
    s_window = search["window"] or epoch
    w_v = cfg["volatility_window"]
    schedule = cfg["environment"]["capacity_schedule"]

    theta, eta, topo = _agents(sc, seed)
    adaptive = sc.preset.regime.adaptive_agents
    policy = sc.policy
    names = policy.names
    tau_idx = names.index("tau") if "tau" in names else None
    shock_rng = np.random.default_rng(split_seed(seed, "shock"))
    belief = behavior.BeliefState.initial(policy.values, beh["history"])
    state = SearchState(window=s_window, decay=search["decay"])
    tol = search["tolerance"]

    agg = np.empty(T)
    over = np.empty(T)
    vol = np.empty(T)
    ph = np.empty(T)
    pol = np.empty((T, len(names)))
    loads_rec = np.empty((T, topo.n_nodes)) if topo.n_nodes > 1 else None
    x = None
    c_prev = np.zeros(topo.n_nodes)
    for t in range(T):
        X = exogenous_demand(t, sc.shocks, shock_rng)
        target = theta * X
        if t > 0:
            belief = behavior.belief_update(belief, policy.values, beh["belief_smoothing"])
        if x is None or not adaptive:
            x = np.clip(behavior.static_action(target), 0.0, beh["x_max"])
        else:
            ant = behavior.anticipated_policy(belief, beh["lookahead"])
            price = sc.effective_price(ant)
            x = behavior.adaptive_update(x, target, eta, price, c_prev[topo.assignment], beh["relax"], beh["x_max"])
        ls = environment.compute_loads(topo, x)
        if not np.isfinite(ls.aggregate):
            raise NumericOverflow(f"non-finite aggregate at step {t}")
        cap = topo.capacity if schedule is None else topo.capacity * schedule[min(t, len(schedule) - 1)]
        tau = policy.values[tau_idx] if tau_idx is not None else cong["tau"]
        c_prev = environment.congestion_signal(ls, cap, tau, cong["kappa"])
        agg[t] = ls.aggregate
        over[t] = environment.overload_metric(ls, cap)
        vol[t] = volatility(agg[: t + 1], w_v)
        ph[t] = phi(agg[t], over[t], vol[t], w["alpha"], w["beta"], w["gamma"])
        if not np.isfinite(ph[t]):
            raise NumericOverflow(f"non-finite performance at step {t}")
        pol[t] = policy.values
        if loads_rec is not None:
            loads_rec[t] = ls.loads
        if sc.search_enabled:
            j_hat = float(np.mean(ph[max(0, t + 1 - s_window) : t + 1]))
            policy, state = online_policy_step(policy, state, j_hat, t + 1, epoch, tol)

    rec = RunRecord(
        agg, over, vol, ph, pol, names, 0.0, seed, sc.fingerprint, sc.regime.value, K, burn_in, loads_rec
    )
    rec.J = evaluate_J(rec, K)
    return rec


def _simulate_rep(args):
    sc, rep, seed = args
    try:
        return simulate(sc, seed)
    except Exception as exc:
        exc.args = (f"replication {rep}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise


def replication_seeds(master, R):
    return [split_seed(master, r) for r in range(R)]


@dataclass
class ReplicationResult:
    records: list
    mean_J: float
    var_J: float

    def summary(self):
        return {
            "mean_J": self.mean_J,
            "var_J": self.var_J,
            "per_rep": [r.summary() for r in self.records],
        }


def replicate(config, R=None, workers=None):
    """R independent runs with seeds split from the master seed, gathered in order."""
    sc = _as_scenario(config)
    R = sc.config["replications"] if R is None else R
    if R < 1:
        raise ValueError("R must be >= 1")
    jobs = [(sc, r, s) for r, s in enumerate(replication_seeds(sc.config["seed"], R))]
    workers = workers if workers is not None else sc.config["workers"]
    if workers is None:
        workers = 1
    if workers > 1 and R > 1:
        with ProcessPoolExecutor(max_workers=min(workers, R, os.cpu_count() or 1)) as ex:
            records = list(ex.map(_simulate_rep, jobs))
    else:
        records = [_simulate_rep(j) for j in jobs]
    js = np.array([r.J for r in records])
    var = float(np.var(js, ddof=1)) if R > 1 else 0.0
    return ReplicationResult(records, float(js.mean()), var)


def write_summary(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
