import json
import math

import numpy as np
import pytest

from adaptmas.engine import RunRecord, evaluate_J, phi, replicate, simulate, split_seed, volatility
from adaptmas.exceptions import NumericOverflow, WindowTooLong


def _cfg(**kw):
    base = {
        "scenario": "grid",
        "regime": "CPVA",
        "horizon": 300,
        "window": 100,
        "agents": {"n": 30},
        "environment": {"capacity": 25.0},
        "congestion": {"kappa": 2.0},
        "behavior": {"relax": 0.05},
        "policy": [{"name": "lambda", "value": 0.5, "lower": 0, "upper": 2, "step": 0.1}],
    }
    base.update(kw)
    return base


@pytest.mark.parametrize("args, expected", [((10, 0, 0, 1, 0, 0), -10), ((3, 1, 2, 0, 0, 0), 0), ((5, 0.5, 2, 1, 1, 1), -7.5)])
def test_phi_examples(args, expected):
    assert phi(*args) == pytest.approx(expected)


def test_evaluate_J_examples():
    assert evaluate_J(np.full(7, -3.0), 4) == -3
    assert evaluate_J(np.array([-1.0, -2, -3, -4]), 2) == -3.5
    s = np.array([1.0, 2, 6])
    assert evaluate_J(s, 3) == 3.0
    with pytest.raises(WindowTooLong):
        evaluate_J(s, 4)


def test_volatility_examples():
    assert volatility([4.0] * 10, 5) == 0
    assert volatility([0.0, 2.0], 2) == pytest.approx(math.sqrt(2))
    assert volatility([0.0, 2.0] * 50, 4) == pytest.approx(math.sqrt(4 / 3))
    assert volatility([3.0], 20) == 0


def test_single_agent_descent():
    cfg = _cfg(
        regime="CPVA",
        horizon=8,
        window=2,
        agents={"n": 1, "theta": 10.0, "eta": 1.0},
        congestion={"kappa": 0.0},
        behavior={"relax": 0.0},
        policy=[{"name": "lambda", "value": 2.0, "lower": 0, "upper": 5, "step": 0.1}],
    )
    assert simulate(cfg).aggregate.tolist() == [10, 8, 6, 4, 2, 0, 0, 0]


def test_record_shapes_and_summary():
    rec = simulate(_cfg())
    T = 300
    assert all(len(s) == T for s in (rec.aggregate, rec.overload, rec.volatility, rec.phi, rec.policy))
    assert abs(rec.J - rec.phi[-100:].mean()) <= 1e-12
    s = rec.summary()
    assert set(s) == {"seed", "config_hash", "J", "mean_aggregate", "overload_freq", "regime"}
    assert 0 <= s["overload_freq"] <= 1
    head = rec.to_csv().splitlines()[0]
    assert head == "t,aggregate,overload,volatility,phi,lambda"


def test_constant_policy_regimes():
    for regime in ("CPCA", "CPVA"):
        rec = simulate(_cfg(regime=regime, search={"epoch": 10}))
        assert np.all(rec.policy == rec.policy[0])


def test_policy_within_bounds_when_searching():
    rec = simulate(_cfg(regime="VPVA", search={"epoch": 10}, horizon=600, window=100))
    assert rec.policy.min() >= 0 and rec.policy.max() <= 2
    assert np.ptp(rec.policy) > 0


def test_replicate_variance_rules():
    assert replicate(_cfg(), 1).var_J == 0
    det = replicate(_cfg(agents={"n": 30, "theta": 1.0, "eta": 0.01}), 3)
    assert det.var_J == 0 and len({r.to_csv() for r in det.records}) == 1
    noisy = replicate(_cfg(shocks={"sigma": 0.1}), 3)
    assert [r.seed for r in noisy.records] == [split_seed(0, r) for r in range(3)]
    assert noisy.var_J == pytest.approx(np.var([r.J for r in noisy.records], ddof=1))


def test_replicate_parallel_matches_serial():
    cfg = _cfg(shocks={"sigma": 0.1})
    a = replicate(cfg, 4, workers=1)
    b = replicate(cfg, 4, workers=2)
    assert [r.to_csv() for r in a.records] == [r.to_csv() for r in b.records]


def test_shock_mean_matches_noise_free_run():
    base = _cfg(regime="CPCA", horizon=200, window=100)
    clean = simulate(base).J
    res = replicate(dict(base, shocks={"sigma": 0.1}), 30)
    stderr = math.sqrt(res.var_J / 30)
    assert abs(res.mean_J - clean) <= 3 * stderr


def test_overflow_detected():
    cfg = _cfg(regime="CPCA", agents={"n": 2, "theta": 1e308, "eta": 0.0}, behavior={"x_max": 1.7e308})
    with pytest.raises(NumericOverflow):
        simulate(cfg)


def test_split_seed_stable():
    assert split_seed(42, 0) == split_seed(42, 0)
    assert len({split_seed(42, r) for r in range(100)}) == 100
    assert 0 <= split_seed(2**64 - 1, "shock") < 2**64


def test_capacity_schedule_tightens_cap():
    cfg = _cfg(regime="CPCA", environment={"capacity": 100.0, "capacity_schedule": [1.0, 0.5]}, agents={"n": 10, "theta": 6.0, "eta": 0.0})
    rec = simulate(cfg)
    assert rec.overload[0] == 0 and rec.overload[1] == pytest.approx(0.2)


def test_multi_node_records_loads():
    rec = simulate(_cfg(environment={"nodes": 3, "capacity": [10.0, 10.0, 10.0]}))
    assert rec.loads.shape == (300, 3)
    np.testing.assert_allclose(rec.loads.sum(axis=1), rec.aggregate, rtol=1e-12)
    assert set(np.unique(rec.overload)) <= {0, 1 / 3, 2 / 3, 1}
