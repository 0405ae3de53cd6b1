import warnings

import numpy as np
import pandas as pd
import pytest

from adaptmas import analysis
from adaptmas.exceptions import DuplicatePoints, TooManyPoints


def test_standardize_example():
    Z, mean, sd, const = analysis.standardize([[1.0, 5.0], [3.0, 5.0]])
    np.testing.assert_allclose(Z, [[-1.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(mean, [2.0, 5.0])
    assert const.tolist() == [False, True]


def test_pca_line():
    t = np.linspace(-1, 1, 50)
    X = np.column_stack([t, 2 * t])
    comps, ratios, proj = analysis.pca(X, 0.99)
    assert comps.shape == (1, 2) and ratios[0] == pytest.approx(1.0)
    np.testing.assert_allclose(np.abs(comps[0]), np.array([1, 2]) / np.sqrt(5))


def test_pca_integer_components_and_inverse():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    model = analysis.PCA(3).fit(X)
    np.testing.assert_allclose(model.inverse_transform(model.transform(X)), X, atol=1e-10)


def test_kmeans_two_points():
    labels, centers, inertia = analysis.kmeans(np.array([[0.0], [10.0]]), 2)
    assert sorted(centers.ravel().tolist()) == [0.0, 10.0] and inertia == 0.0
    assert labels[0] != labels[1]


def test_kmeans_duplicate_points_warn():
    with pytest.warns(DuplicatePoints):
        analysis.KMeans(3).fit(np.zeros((5, 2)))


def test_kmeans_bad_k():
    with pytest.raises(ValueError):
        analysis.kmeans(np.zeros((3, 1)), 4)


def test_gmm_separated_blobs():
    rng = np.random.default_rng(1)
    X = np.vstack([rng.normal(0, 1, (200, 1)), rng.normal(8, 1, (200, 1))])
    w, means, var, resp, trace = analysis.gmm_fit(X, 2)
    assert sorted(means.ravel().round()) == [0.0, 8.0]
    np.testing.assert_allclose(w, [0.5, 0.5], atol=0.02)
    np.testing.assert_allclose(resp.sum(axis=1), 1.0)
    assert all(b >= a - 1e-9 * abs(a) for a, b in zip(trace, trace[1:]))


def test_design_grid_and_lhs():
    pts = analysis.sample_design({"a": (0, 1), "b": (10, 20)}, "grid", levels=3)
    assert len(pts) == 9 and pts[0] == {"a": 0.0, "b": 10.0} and pts[-1] == {"a": 1.0, "b": 20.0}
    lhs = analysis.sample_design({"a": (0, 1)}, "lhs", n=10, rng_seed=3)
    strata = sorted(int(p["a"] * 10) for p in lhs)
    assert strata == list(range(10))
    assert analysis.sample_design({}) == [{}]
    with pytest.raises(TooManyPoints):
        analysis.sample_design({k: (0, 1) for k in "abcd"}, levels=10, max_points=100)


def test_morris_additive_and_interaction():
    space = {"a": (0.0, 1.0), "b": (0.0, 1.0), "c": (0.0, 1.0)}
    lin = analysis.morris_screen(lambda p: 3 * p["a"] - p["b"], space, r=8, p=4, rng_seed=0)
    np.testing.assert_allclose(lin.mu, [3.0, -1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(lin.sigma, 0.0, atol=1e-12)
    inter = analysis.morris_screen(lambda p: p["a"] * p["b"], space, r=20, p=4, rng_seed=1)
    assert inter.sigma[0] > 0 and inter.sigma[1] > 0 and inter.mu_star[2] == 0
    assert lin.delta == pytest.approx(2 / 3)


def test_morris_error_is_annotated():
    def bad(p):
        raise ZeroDivisionError("boom")

    with pytest.raises(RuntimeError, match="trajectory 0, step 0"):
        analysis.morris_screen(bad, {"a": (0, 1)}, r=2)


def test_cluster_report_names():
    rows = []
    for i, (over, h, c) in enumerate([(0.0, 0.1, 0.1), (0.0, 0.1, 0.1), (0.9, 0.5, 0.2), (0.9, 0.5, 0.2)]):
        rows.append({"run_id": str(i), "mean_aggregate": 1.0, "overload_freq": over, "h_mu": h, "C_mu": c, "E_pred": 0.0, "regime": "CPCA", "label": "x" if over else "y"})
    df = pd.DataFrame(rows)
    rep = analysis.cluster_report(df, [1, 1, 0, 0], truth=df["label"])
    assert rep["clusters"].loc[1, "name"] == "stable"
    assert rep["clusters"].loc[0, "name"] == "overloaded"
    assert rep["ari"] == 1.0


def test_features_round_trip(tmp_path):
    f = analysis.RunFeatures("a", 1.0, 0.1, 0.5, 0.3, 0.2, "CPCA", "lo", 7, "stationary")
    analysis.write_features([f], tmp_path / "f.csv")
    df = analysis.read_features(tmp_path / "f.csv")
    assert df.loc[0, "run_id"] == "a" and df.loc[0, "h_mu"] == 0.5
