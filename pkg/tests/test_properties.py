"""Property-based checks of the model invariants."""
import warnings

import numpy as np
import pandas as pd
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adaptmas import analysis, behavior, environment
from adaptmas.control import PolicyVector, SearchState, online_policy_step
from adaptmas.diagnostics import entropy_rate_curve
from adaptmas.population import IPF, MarginalConstraint

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
pos = st.floats(0.1, 50.0)


@SETTINGS
@given(seed_w=arrays(float, 6, elements=st.floats(0.1, 10.0)), rows=st.lists(pos, min_size=2, max_size=2), cols=st.lists(pos, min_size=3, max_size=3))
def test_ipf_hits_marginals(seed_w, rows, cols):
    cols = np.array(cols) * sum(rows) / sum(cols)
    recs = pd.DataFrame({"r": list("aaabbb"), "c": list("xyzxyz")})
    cons = [MarginalConstraint("r", ["a", "b"], rows), MarginalConstraint("c", ["x", "y", "z"], cols)]
    w = IPF(cons).fit(recs, sample_weight=seed_w).weights_
    np.testing.assert_allclose([w[:3].sum(), w[3:].sum()], rows, rtol=1e-6)
    np.testing.assert_allclose(w.reshape(2, 3).sum(axis=0), cols, rtol=1e-6)
    assert np.all(w >= 0)


@SETTINGS
@given(
    x=arrays(float, 5, elements=st.floats(0, 100)),
    theta=arrays(float, 5, elements=st.floats(0, 100)),
    eta=arrays(float, 5, elements=st.floats(0, 1)),
    price=st.floats(0, 10),
    cong=st.floats(0, 10),
    relax=st.floats(0, 1),
    x_max=st.floats(1, 200),
)
def test_actions_stay_in_range(x, theta, eta, price, cong, relax, x_max):
    out = behavior.adaptive_update(x, theta, eta, price, cong, relax, x_max)
    assert np.all(out >= 0) and np.all(out <= x_max)


@SETTINGS
@given(x=arrays(float, 4, elements=st.floats(0, 50)), eta=st.floats(0, 1), p1=st.floats(0, 5), p2=st.floats(0, 5))
def test_higher_price_never_raises_action(x, eta, p1, p2):
    lo, hi = sorted((p1, p2))
    a = behavior.adaptive_update(x, x, eta, hi, 0.0)
    b = behavior.adaptive_update(x, x, eta, lo, 0.0)
    assert np.all(a <= b)


@SETTINGS
@given(l1=st.floats(0, 500), l2=st.floats(0, 500), cap=st.floats(1, 100), tau=st.floats(0, 2), kappa=st.floats(0, 50))
def test_congestion_monotone_in_load(l1, l2, cap, tau, kappa):
    lo, hi = sorted((l1, l2))
    c_lo = environment.congestion_signal(environment.LoadState(np.array([lo]), lo), cap, tau, kappa)
    c_hi = environment.congestion_signal(environment.LoadState(np.array([hi]), hi), cap, tau, kappa)
    assert 0 <= c_lo[0] <= c_hi[0]


@SETTINGS
@given(loads=arrays(float, 4, elements=st.floats(0, 100)), caps=arrays(float, 4, elements=st.floats(1, 100)))
def test_multi_node_overload_is_fraction(loads, caps):
    o = environment.overload_metric(environment.LoadState(loads, float(loads.sum())), caps)
    assert 0.0 <= o <= 1.0 and (o * 4) == round(o * 4)


@SETTINGS
@given(start=st.floats(-10, 10), target=st.floats(-10, 10), a=st.floats(0.05, 1.0), steps=st.integers(1, 30))
def test_belief_converges_geometrically(start, target, a, steps):
    b = behavior.BeliefState.initial([start], 4)
    for _ in range(steps):
        b = behavior.belief_update(b, [target], a)
    # the first update also moves from start, so the error shrinks by (1-a) each time
    assert abs(b.estimate[0] - target) <= abs(start - target) * (1 - a) ** steps + 1e-9


@SETTINGS
@given(sym=st.lists(st.integers(0, 2), min_size=20, max_size=200), L=st.integers(1, 6))
def test_block_entropy_monotone_and_bounded(sym, L):
    s = np.array(sym)
    H, h = entropy_rate_curve(s, L, 3)
    assert np.all(h >= -1e-12)
    assert np.all(h <= np.log2(3) + 1e-9)


@SETTINGS
@given(coef=arrays(float, 3, elements=st.floats(-5, 5)), seed=st.integers(0, 1000))
def test_morris_linear_has_zero_spread(coef, seed):
    space = {"a": (0.0, 2.0), "b": (-1.0, 1.0), "c": (5.0, 6.0)}
    res = analysis.morris_screen(lambda p: coef[0] * p["a"] + coef[1] * p["b"] + coef[2] * p["c"], space, r=4, rng_seed=seed)
    spans = np.array([2.0, 2.0, 1.0])
    np.testing.assert_allclose(res.mu, coef * spans, atol=1e-9)
    np.testing.assert_allclose(res.sigma, 0.0, atol=1e-9)


@SETTINGS
@given(X=arrays(float, (30, 2), elements=st.floats(-10, 10)), k=st.integers(1, 4), seed=st.integers(0, 100))
def test_kmeans_best_restart(X, k, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = analysis.KMeans(k, 4, random_state=seed).fit(X)
    assert m.inertia_ == min(m.restart_inertias_)
    assert m.inertia_ <= ((X - X.mean(axis=0)) ** 2).sum() + 1e-9


@SETTINGS
@given(X=arrays(float, (40, 2), elements=st.floats(-10, 10)), seed=st.integers(0, 100))
def test_gmm_loglik_nondecreasing(X, seed):
    assume(np.unique(X, axis=0).shape[0] >= 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = analysis.GaussianMixture(2, random_state=seed).fit(X)
    tr = m.loglik_trace_
    assert all(b >= a - 1e-9 * max(1.0, abs(a)) for a, b in zip(tr, tr[1:]))
    np.testing.assert_allclose(m.weights_.sum(), 1.0)


@SETTINGS
@given(X=arrays(float, (25, 4), elements=st.floats(-100, 100)))
def test_pca_components_orthonormal(X):
    assume(np.linalg.matrix_rank(X - X.mean(axis=0)) >= 1)
    m = analysis.PCA(1.0).fit(X)
    C = m.components_
    np.testing.assert_allclose(C @ C.T, np.eye(C.shape[0]), atol=1e-8)
    assert np.all(np.diff(m.explained_variance_ratio_) <= 1e-12)


@SETTINGS
@given(js=st.lists(st.floats(-100, 100), min_size=1, max_size=40), epoch=st.integers(1, 20))
def test_online_policy_stays_within_bounds(js, epoch):
    p = PolicyVector(("a", "b"), [0.5, 0.5], [0.0, 0.0], [1.0, 1.0], [0.3, 0.3])
    state = SearchState()
    for k, j in enumerate(js, start=1):
        p, state = online_policy_step(p, state, j, k * epoch, epoch)
        assert np.all(p.values >= 0) and np.all(p.values <= 1)
        diff = np.abs(p.values - state.incumbent)
        assert np.count_nonzero(diff > 1e-12) <= 1
