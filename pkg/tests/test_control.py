import math

import numpy as np
import pytest

from adaptmas.control import (
    PolicyVector,
    Regime,
    ScmGraph,
    SearchState,
    apply_intervention,
    hill_climb_offline,
    online_policy_step,
    validate_scm,
)
from adaptmas.exceptions import BudgetExhausted, CycleDetected, OutOfBounds, UnknownVariable
from adaptmas.scenarios import default_scm


def _policy(values=(1.0, 1.0), lo=0.0, hi=5.0, step=0.5):
    d = len(values)
    return PolicyVector(tuple("abcdef"[:d]), values, [lo] * d, [hi] * d, [step] * d)


def test_policy_vector_bounds_and_readonly():
    p = _policy()
    with pytest.raises(OutOfBounds):
        _policy((6.0, 1.0))
    with pytest.raises(ValueError):
        p.values[0] = 3.0
    assert p.with_values([9.0, -1.0]).as_dict() == {"a": 5.0, "b": 0.0}
    with pytest.raises(OutOfBounds):
        p.with_overrides({"a": 7.0})
    assert p["b"] == 1.0 and p.get("z", 3) == 3


def test_regime_switches():
    assert [r.varies_policy for r in Regime] == [False, False, True, True]
    assert [r.adaptive_agents for r in Regime] == [False, True, False, True]
    with pytest.raises(ValueError):
        Regime.parse("XPXA")


def _drive(policy, j_values, epoch=10, tol=1e-6):
    st = SearchState()
    seen = []
    for k, j in enumerate(j_values, start=1):
        policy, st = online_policy_step(policy, st, j, k * epoch, epoch, tol)
        seen.append(policy.values.copy())
    return policy, st, seen


def test_g_acts_only_on_boundaries():
    p = _policy()
    q, st = online_policy_step(p, SearchState(), 1.0, 7, 10)
    assert q is p and st.epochs == 0


def test_g_constant_j_always_reverts():
    p0 = _policy()
    _, st, seen = _drive(p0, [0.0] * 12)
    assert np.array_equal(st.incumbent, p0.values)
    for vals in seen:
        diff = np.abs(vals - p0.values)
        assert np.count_nonzero(diff) == 1 and diff.max() == pytest.approx(0.5)


def test_g_improving_j_walks_to_bound():
    p = _policy((1.0, 1.0))
    st = SearchState()
    incumbents = []
    for k in range(1, 60):
        p, st = online_policy_step(p, st, float(p.values.sum()), 10 * k, 10)
        incumbents.append(st.incumbent.sum())
    assert all(y >= x for x, y in zip(incumbents, incumbents[1:]))
    assert np.array_equal(st.incumbent, [5.0, 5.0])


def test_g_infinite_tolerance_never_probes():
    p0 = _policy()
    st = SearchState()
    p = p0
    for k in range(1, 6):
        p, st = online_policy_step(p, st, float(k), 10 * k, 10, math.inf)
    assert p is p0


def test_g_step_decay_after_full_rejection_cycle():
    _, st, _ = _drive(_policy(), [0.0] * 9)
    st.decay = 0.5
    _, st2, _ = _drive(_policy(), [0.0] * 9)
    assert st2.scale == 1.0
    s = SearchState(decay=0.5)
    p = _policy()
    for k in range(1, 7):
        p, s = online_policy_step(p, s, 0.0, 10 * k, 10)
    assert s.scale == 0.5


def test_hill_climb_quadratic_with_brute_force():
    star = np.array([2.0, 3.0])
    p0 = PolicyVector(("a", "b"), [0.0, 0.0], [-5, -5], [5, 5], [1.0, 1.0])
    res = hill_climb_offline(lambda p: (-float(((p.values - star) ** 2).sum()), 0.0), p0)
    assert np.all(np.abs(res.policy.values - star) <= res.terminal_step)
    lattice = [(a, b) for a in range(-5, 6) for b in range(-5, 6)]
    best = max(lattice, key=lambda q: -((q[0] - 2) ** 2 + (q[1] - 3) ** 2))
    assert np.allclose(res.policy.values, best)


def test_hill_climb_local_max_decays_without_moving():
    p0 = PolicyVector(("a", "b"), [0.0, 0.0], [-5, -5], [5, 5], [1.0, 1.0])
    res = hill_climb_offline(lambda p: (-float((p.values**2).sum()), 0.0), p0, min_step_ratio=0.2)
    assert res.accepted == [res.trace[0]]
    # one round of 2d neighbours per step level: 1, 0.5, 0.25
    assert res.n_evals == 1 + 3 * 4
    assert res.final_scale == 0.25


def test_hill_climb_flat():
    p0 = _policy()
    res = hill_climb_offline(lambda p: (1.0, 0.0), p0)
    assert np.array_equal(res.policy.values, p0.values)
    assert len({t["mean"] for t in res.trace}) == 1


def test_hill_climb_budget():
    p0 = PolicyVector(("a",), [0.0], [-100], [100], [1.0])
    with pytest.warns(BudgetExhausted):
        res = hill_climb_offline(lambda p: (float(p.values[0]), 0.0), p0, max_evals=7)
    assert res.exhausted and res.n_evals == 7
    assert res.policy.values[0] == 3.0


def test_scm_validation():
    scm = default_scm("emissions", "VPVA")
    assert validate_scm(scm)
    cyc = ScmGraph(scm.variables, scm.edges + [("Y_t", "P_t", 0), ("P_t", "Y_t", 0)])
    with pytest.raises(CycleDetected) as err:
        validate_scm(cyc)
    assert "P_t" in err.value.path
    with pytest.raises(UnknownVariable):
        validate_scm(ScmGraph(scm.variables, [("Z", "P_t", 0)]))


def test_intervention_cuts_feedback():
    scm = default_scm("grid", "VPVA")
    assert scm.has_feedback
    out = apply_intervention(scm, _policy())
    assert not out.has_feedback and out.intervention is not None
    cp = default_scm("grid", "CPCA")
    assert apply_intervention(cp, _policy()).edge_set() == cp.edge_set()
