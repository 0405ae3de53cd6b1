"""Run-level features, clustering, experimental designs and Morris screening.

Standardizer, PCA, KMeans and GaussianMixture follow the scikit-learn
estimator protocol (constructor stores hyperparameters, ``fit`` sets
trailing-underscore attributes). ARI and silhouette scores come from
``sklearn.metrics``.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.metrics import adjusted_rand_score, silhouette_score
from sklearn.utils.validation import check_array, check_is_fitted

from .diagnostics import classify_trajectory, info_measures, symbolize
from .exceptions import DegenerateComponent, DegenerateSeries, DuplicatePoints, InsufficientData, SeriesTooShort, TooManyPoints

FEATURES = ["mean_aggregate", "overload_freq", "h_mu", "C_mu", "E_pred"]
FEATURE_COLUMNS = ["run_id", *FEATURES, "regime", "label"]


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


@dataclass
class RunFeatures:
    run_id: str
    mean_aggregate: float
    overload_freq: float
    h_mu: float
    C_mu: float
    E_pred: float
    regime: str = ""
    label: str = ""
    seed: int = 0
    classification: str = ""

    def __post_init__(self):
        if not 0.0 <= self.overload_freq <= 1.0:
            raise ValueError("overload_freq must lie in [0, 1]")
        for name in ("h_mu", "C_mu", "E_pred"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def vector(self):
        return np.array([getattr(self, f) for f in FEATURES])


def diagnose_series(series, alphabet=2, max_length=None, alpha=0.005, min_count=10):
    """Symbolize by quantiles and compute the information measures."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSeries)
        sym = symbolize(series, alphabet)
    return info_measures(sym, max_length, alpha, min_count)


def diagnose_record(record, diag):
    """Info measures and trajectory class for a run's post-burn-in observable."""
    y = record.post_burn_in(diag.get("observable", "aggregate"))
    info = diagnose_series(y, diag.get("alphabet", 2), diag.get("max_length"), diag.get("alpha", 0.005), diag.get("min_count", 10))
    try:
        kind = classify_trajectory(y, diag.get("s_drift", 2.0), diag.get("f_cyc", 0.4))
    except SeriesTooShort:
        kind = ""
    return info, kind


def extract_features(record, info, run_id="", label="", classification=""):
    over = record.post_burn_in("overload")
    return RunFeatures(
        run_id=run_id,
        mean_aggregate=float(np.mean(record.post_burn_in("aggregate"))),
        overload_freq=float(np.count_nonzero(over > 0) / over.size),
        h_mu=float(info.h_mu),
        C_mu=float(info.C_mu),
        E_pred=float(info.E_pred),
        regime=record.regime,
        label=label,
        seed=record.seed,
        classification=classification,
    )


def features_frame(rows):
    df = pd.DataFrame([asdict(r) for r in rows])
    cols = FEATURE_COLUMNS + ["classification"]
    return df[cols] if len(df) else pd.DataFrame(columns=cols)


def write_features(rows, path):
    features_frame(rows).to_csv(path, index=False, lineterminator="\n", float_format="%.17g")


def read_features(path):
    df = pd.read_csv(path, dtype={"run_id": str, "regime": str, "label": str})
    missing = [c for c in FEATURES if c not in df.columns]
    if missing:
        raise ValueError(f"features file lacks columns {missing}")
    return df


# ---------------------------------------------------------------------------
# standardization and PCA
# ---------------------------------------------------------------------------


class Standardizer(TransformerMixin, BaseEstimator):
    """Column z-scores (population sd); constant columns map to 0 and are flagged in ``constant_``."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if X.shape[0] < 2:
            raise ValueError("standardization needs at least 2 rows")
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.constant_ = sd <= 1e-12 * np.maximum(1.0, np.abs(self.mean_))
        self.scale_ = np.where(self.constant_, 1.0, sd)
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=float)
        Z = (X - self.mean_) / self.scale_
        Z[:, self.constant_] = 0.0
        return Z


def standardize(X):
    """Returns ``(Z, means, sds, constant_flags)``."""
    st = Standardizer().fit(X)
    return st.transform(X), st.mean_, st.scale_, st.constant_


class PCA(TransformerMixin, BaseEstimator):
    """Principal components from the eigendecomposition of the sample covariance.

    ``n_components`` is either an int or a float in (0, 1]; a float keeps
    the fewest components whose explained ratios reach it. Each component
    is signed so that its largest-magnitude loading is positive.
    """

    def __init__(self, n_components=1.0):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        n, d = X.shape
        if n < d:
            warnings.warn(f"{n} rows for {d} columns; covariance is rank deficient", InsufficientData, stacklevel=2)
        self.mean_ = X.mean(axis=0)
        cov = np.atleast_2d(np.cov(X - self.mean_, rowvar=False, ddof=1))
        vals, vecs = np.linalg.eigh(cov)
        order = np.argsort(vals)[::-1]
        vals = np.clip(vals[order], 0.0, None)
        vecs = vecs[:, order].T
        pivot = np.argmax(np.abs(vecs), axis=1)
        vecs *= np.where(vecs[np.arange(d), pivot] < 0, -1.0, 1.0)[:, None]
        total = vals.sum()
        ratios = vals / total if total > 0 else np.zeros(d)
        k = self._n_keep(ratios, d)
        self.components_ = vecs[:k]
        self.explained_variance_ = vals[:k]
        self.explained_variance_ratio_ = ratios[:k]
        self.n_components_ = k
        return self

    def _n_keep(self, ratios, d):
        nc = self.n_components
        if isinstance(nc, (int, np.integer)) and not isinstance(nc, bool):
            if not 1 <= nc <= d:
                raise ValueError(f"n_components must lie in [1, {d}]")
            return int(nc)
        if not 0.0 < nc <= 1.0:
            raise ValueError("variance target must lie in (0, 1]")
        if nc >= 1.0:
            return d
        return int(min(d, np.searchsorted(np.cumsum(ratios), nc - 1e-12) + 1))

    def transform(self, X):
        check_is_fitted(self, "components_")
        return (check_array(X, dtype=float) - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        return np.asarray(Z, dtype=float) @ self.components_ + self.mean_


def pca(X, variance_target=1.0):
    model = PCA(variance_target).fit(X)
    return model.components_, model.explained_variance_ratio_, model.transform(X)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


def _sq_dist(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _plusplus(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def _lloyd(X, centers, max_iter):
    labels = None
    for _ in range(max_iter):
        d2 = _sq_dist(X, centers)
        new = d2.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(centers.shape[0]):
            members = labels == j
            if members.any():
                centers[j] = X[members].mean(axis=0)
            else:
                # reseed from the point farthest from its centroid
                far = int(d2[np.arange(X.shape[0]), labels].argmax())
                centers[j] = X[far]
                labels[far] = j
                d2 = _sq_dist(X, centers)
    d2 = _sq_dist(X, centers)
    labels = d2.argmin(axis=1)
    for j in range(centers.shape[0]):
        if (labels == j).any():
            centers[j] = X[labels == j].mean(axis=0)
    inertia = float(_sq_dist(X, centers)[np.arange(X.shape[0]), labels].sum())
    return labels, centers, inertia


class KMeans(ClusterMixin, BaseEstimator):
    """Lloyd's algorithm with k-means++ seeding, best of ``n_init`` restarts.

    Attributes
    ----------
    labels_, cluster_centers_, inertia_
    restart_inertias_ : list of float
        Inertia reached by every restart; ``inertia_`` is their minimum.
    """

    def __init__(self, n_clusters=2, n_init=10, max_iter=300, random_state=0):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        k = self.n_clusters
        if not 1 <= k <= X.shape[0]:
            raise ValueError(f"n_clusters={k} must lie in [1, {X.shape[0]}]")
        if k > np.unique(X, axis=0).shape[0]:
            warnings.warn(f"{k} clusters for fewer distinct points", DuplicatePoints, stacklevel=2)
        seeds = np.random.SeedSequence(self.random_state).spawn(self.n_init)
        best = None
        self.restart_inertias_ = []
        for ss in seeds:
            rng = np.random.default_rng(ss)
            labels, centers, inertia = _lloyd(X, _plusplus(X, k, rng), self.max_iter)
            self.restart_inertias_.append(inertia)
            if best is None or inertia < best[2]:
                best = (labels, centers, inertia)
        self.labels_, self.cluster_centers_, self.inertia_ = best
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        return _sq_dist(check_array(X, dtype=float), self.cluster_centers_).argmin(axis=1)


def kmeans(X, k, restarts=10, rng_seed=0):
    m = KMeans(k, restarts, random_state=rng_seed).fit(X)
    return m.labels_, m.cluster_centers_, m.inertia_


# ---------------------------------------------------------------------------
# Gaussian mixture
# ---------------------------------------------------------------------------

VAR_FLOOR = 1e-8


class GaussianMixture(BaseEstimator):
    """Diagonal-covariance mixture fitted by EM from a k-means start.

    ``loglik_trace_`` holds the total log-likelihood after each E-step and
    is checked to be nondecreasing. Variances are floored at 1e-8; hitting
    the floor sets ``degenerate_`` and warns.
    """

    def __init__(self, n_components=2, tol=1e-6, max_iter=500, random_state=0):
        self.n_components = n_components
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def _log_joint(self, X):
        var = self.variances_
        ll = -0.5 * (((X[:, None, :] - self.means_[None]) ** 2) / var[None] + np.log(2 * np.pi * var[None])).sum(axis=2)
        return ll + np.log(self.weights_)[None]

    def _estep(self, X):
        lj = self._log_joint(X)
        m = lj.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(lj - m).sum(axis=1))
        return np.exp(lj - lse[:, None]), float(lse.sum())

    def _mstep(self, X, resp):
        nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
        self.weights_ = nk / X.shape[0]
        self.means_ = (resp.T @ X) / nk[:, None]
        var = (resp.T @ X**2) / nk[:, None] - self.means_**2
        low = var < VAR_FLOOR
        if low.any():
            self.degenerate_ = True
        self.variances_ = np.maximum(var, VAR_FLOOR)

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        k = self.n_components
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if not 1 <= k <= X.shape[0]:
            raise ValueError(f"n_components={k} must lie in [1, {X.shape[0]}]")
        self.degenerate_ = False
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DuplicatePoints)
            labels = KMeans(k, 5, random_state=self.random_state).fit(X).labels_
        resp = np.eye(k)[labels]
        self._mstep(X, resp)
        trace = []
        self.converged_ = False
        for _ in range(self.max_iter):
            resp, ll = self._estep(X)
            trace.append(ll)
            if len(trace) > 1:
                # EM can only lose likelihood through float rounding
                assert ll >= trace[-2] - 1e-9 * max(1.0, abs(trace[-2])), "EM log-likelihood decreased"
                if ll - trace[-2] < self.tol:
                    self.converged_ = True
                    break
            self._mstep(X, resp)
        self.responsibilities_ = resp
        self.loglik_trace_ = trace
        if self.degenerate_:
            warnings.warn("a component variance hit the 1e-8 floor", DegenerateComponent, stacklevel=2)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "means_")
        return self._estep(check_array(X, dtype=float))[0]

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)


def gmm_fit(X, k, rng_seed=0, tol=1e-6, max_iter=500):
    m = GaussianMixture(k, tol, max_iter, rng_seed).fit(X)
    return m.weights_, m.means_, m.variances_, m.responsibilities_, m.loglik_trace_


# ---------------------------------------------------------------------------
# designs
# ---------------------------------------------------------------------------


def _check_space(space):
    names = list(space)
    bounds = np.array([space[n] for n in names], dtype=float).reshape(len(names), 2)
    if np.any(bounds[:, 0] >= bounds[:, 1]):
        raise ValueError("each parameter range needs lo < hi")
    return names, bounds


def sample_design(space, method="grid", levels=3, n=10, rng_seed=0, max_points=100_000):
    """Parameter points as a list of ``{name: value}``.

    ``grid`` takes the Cartesian product of ``levels`` evenly spaced values
    per parameter; ``lhs`` draws one point per stratum of each dimension.
    """
    if not space:
        return [{}]
    names, b = _check_space(space)
    if method == "grid":
        if levels < 1:
            raise ValueError("levels must be >= 1")
        total = levels ** len(names)
        if total > max_points:
            raise TooManyPoints(f"grid of {total} points exceeds cap {max_points}")
        axes = [np.linspace(lo, hi, levels) if levels > 1 else np.array([(lo + hi) / 2]) for lo, hi in b]
        return [dict(zip(names, map(float, p))) for p in itertools.product(*axes)]
    if method == "lhs":
        if n > max_points:
            raise TooManyPoints(f"{n} points exceed cap {max_points}")
        rng = np.random.default_rng(rng_seed)
        u = np.empty((n, len(names)))
        for j in range(len(names)):
            u[:, j] = (rng.permutation(n) + rng.uniform(size=n)) / n
        pts = b[:, 0] + u * (b[:, 1] - b[:, 0])
        return [dict(zip(names, map(float, row))) for row in pts]
    raise ValueError(f"unknown design method {method!r}")


# ---------------------------------------------------------------------------
# Morris screening
# ---------------------------------------------------------------------------


@dataclass
class MorrisResult:
    names: list
    mu: np.ndarray
    mu_star: np.ndarray
    sigma: np.ndarray
    effects: np.ndarray
    trajectories: int
    levels: int
    delta: float

    def frame(self):
        return pd.DataFrame({"param": self.names, "mu": self.mu, "mu_star": self.mu_star, "sigma": self.sigma})


def morris_screen(evaluator, space, r=10, p=4, rng_seed=0, map_fn=map):
    """Elementary effects along ``r`` one-at-a-time trajectories on a ``p``-level lattice.

    Effects are taken in unit-scaled coordinates, so a parameter's effect
    is the change in output per full span of its range.
    """
    if p < 4 or p % 2:
        raise ValueError("levels must be even and >= 4")
    if r < 2:
        raise ValueError("need at least 2 trajectories")
    names, b = _check_space(space)
    k = len(names)
    delta = p / (2.0 * (p - 1))
    rng = np.random.default_rng(rng_seed)
    grid = np.arange(p) / (p - 1)
    trajs = []
    for _ in range(r):
        x = rng.choice(grid, size=k)
        pts = [x.copy()]
        order = rng.permutation(k)
        for i in order:
            x = x.copy()
            x[i] = x[i] + delta if x[i] + delta <= 1.0 + 1e-12 else x[i] - delta
            pts.append(x)
        trajs.append((order, np.array(pts)))

    def scaled(u):
        return dict(zip(names, map(float, b[:, 0] + np.clip(u, 0.0, 1.0) * (b[:, 1] - b[:, 0]))))

    flat = [scaled(u) for _, pts in trajs for u in pts]
    values = np.array([float(v) for v in _annotated(evaluator, flat, map_fn, k + 1)]).reshape(r, k + 1)
    effects = np.empty((r, k))
    for j, (order, pts) in enumerate(trajs):
        for step, i in enumerate(order):
            du = pts[step + 1, i] - pts[step, i]
            effects[j, i] = (values[j, step + 1] - values[j, step]) / du
    return MorrisResult(
        names,
        effects.mean(axis=0),
        np.abs(effects).mean(axis=0),
        effects.std(axis=0, ddof=1),
        effects,
        r,
        p,
        delta,
    )


class _Annotated:
    """Picklable wrapper that tags evaluator failures with their trajectory and step."""

    def __init__(self, evaluator, per_traj):
        self.evaluator = evaluator
        self.per_traj = per_traj

    def __call__(self, args):
        i, pt = args
        try:
            return self.evaluator(pt)
        except Exception as exc:
            where = f"trajectory {i // self.per_traj}, step {i % self.per_traj}"
            raise RuntimeError(f"evaluator failed at {where}: {exc!r}") from exc


def _annotated(evaluator, points, map_fn, per_traj):
    return map_fn(_Annotated(evaluator, per_traj), list(enumerate(points)))


# ---------------------------------------------------------------------------
# cluster report
# ---------------------------------------------------------------------------

NAME_ORDER = ("stable", "overloaded", "near-critical", "oscillatory")


def _suggest_names(summary):
    """Greedy advisory names; the lowest cluster index wins ties."""
    names = {}
    free = list(summary.index)

    def pick(key, reverse):
        vals = [(key(c), c) for c in free]
        best = max(vals, key=lambda t: (t[0], -t[1])) if reverse else min(vals, key=lambda t: (t[0], t[1]))
        return best[1]

    rules = {
        "stable": (lambda c: (summary.loc[c, "overload_freq"], summary.loc[c, "h_mu"]), False),
        "overloaded": (lambda c: summary.loc[c, "overload_freq"], True),
        "near-critical": (lambda c: summary.loc[c, "C_mu"], True),
        "oscillatory": (lambda c: summary.loc[c, "cyclic_fraction"], True),
    }
    for name in NAME_ORDER:
        if not free:
            break
        c = pick(*rules[name])
        names[c] = name
        free.remove(c)
    for c in free:
        names[c] = f"cluster-{c}"
    return names


def silhouette_guide(Z, ks=range(2, 7), rng_seed=0):
    out = {}
    for k in ks:
        if k >= Z.shape[0]:
            break
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DuplicatePoints)
            labels = KMeans(k, 10, random_state=rng_seed).fit(Z).labels_
        out[k] = float(silhouette_score(Z, labels)) if len(set(labels)) > 1 else float("nan")
    return out


def cluster_report(features, labels, truth=None):
    """Per-cluster feature means, advisory names and a label cross-tabulation."""
    df = features.reset_index(drop=True).copy()
    labels = np.asarray(labels)
    if labels.shape[0] != len(df):
        raise ValueError("one cluster label per feature row required")
    df["cluster"] = labels
    cyc = df["classification"] if "classification" in df.columns else pd.Series("", index=df.index)
    df["cyclic_fraction"] = (cyc.astype(str) == "cyclic").astype(float)
    summary = df.groupby("cluster")[FEATURES + ["cyclic_fraction"]].mean()
    summary["size"] = df.groupby("cluster").size()
    summary["name"] = pd.Series(_suggest_names(summary))
    report = {"clusters": summary}
    if "label" in df.columns:
        report["crosstab"] = pd.crosstab(df["cluster"], df["label"].astype(str))
    if truth is not None:
        report["ari"] = float(adjusted_rand_score(truth, labels))
    return report
